#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncevo/coverage.hpp"
#include "ncevo/data.hpp"
#include "ncevo/descriptor.hpp"
#include "ncevo/nn.hpp"

namespace ncevo {

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t positives() const noexcept { return tp + fn; }
  std::size_t negatives() const noexcept { return tn + fp; }
};

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth);

/// 1/2 (TP/P + TN/Neg). Throws DataError when `truth` lacks a class.
double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth);

/// p >= 0.5 -> 1.
std::vector<int> to_labels(std::span<const double> probabilities);

/// Mean of max(p, 1 - p).
double cert(std::span<const double> probabilities);

enum class Strategy : std::uint8_t { supervised, coverage, cert, ret };

struct FitnessSpec {
  Strategy strategy = Strategy::supervised;
  CoverageConfig coverage;  // used by Strategy::coverage
  double ret_low = 0.4;
  double ret_high = 0.6;

  void check() const;
  /// SUPERVISED, CERT, RET, or the coverage metric name.
  std::string label() const;
  static FitnessSpec parse(std::string_view label, const CoverageConfig& coverage_defaults = {});
};

struct FitnessValue {
  double f = 0.0;
  double balanced_accuracy = 0.0;  // on the validation set
  double auxiliary = 0.0;          // coverage, CERT, or pseudo-label count for RET
  bool failed = false;             // training diverged; f = 0

  friend bool operator==(const FitnessValue&, const FitnessValue&) = default;
};

/// q * auxiliary + (1 - q) * b_acc.
double blend(double q, double auxiliary, double balanced_acc) noexcept;

/// Builds the candidate and trains it on `data` with seeds derived from `seed`.
/// All strategies use this, so identical seeds give identical step-1 models.
Network build_and_train(const NetworkDescriptor& candidate, const LabeledSet& data, const TrainConfig& train,
                        std::uint64_t seed);

FitnessValue supervised_fitness(const NetworkDescriptor& candidate, const DatasetSplit& splits,
                                const TrainConfig& train, std::uint64_t seed);
FitnessValue coverage_fitness(const NetworkDescriptor& candidate, const DatasetSplit& splits,
                              const CoverageConfig& coverage, const TrainConfig& train, std::uint64_t seed);
FitnessValue cert_fitness(const NetworkDescriptor& candidate, const DatasetSplit& splits, const TrainConfig& train,
                          std::uint64_t seed);
FitnessValue ret_fitness(const NetworkDescriptor& candidate, const DatasetSplit& splits, const TrainConfig& train,
                         std::uint64_t seed, double low = 0.4, double high = 0.6);

/// Labeled data plus every unlabeled row whose probability is <= low (label 0)
/// or >= high (label 1), in row order.
LabeledSet build_retraining_set(const LabeledSet& labeled, const Matrix& unlabeled,
                                std::span<const double> probabilities, double low, double high);

/// Dispatch on the strategy; q == 0 always uses the supervised fitness.
FitnessValue evaluate_fitness(const FitnessSpec& spec, const NetworkDescriptor& candidate,
                              const DatasetSplit& splits, const TrainConfig& train, std::uint64_t seed);

}  // namespace ncevo
