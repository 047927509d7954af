#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ncevo/matrix.hpp"

namespace ncevo {

struct Dataset {
  std::string name;
  std::vector<std::string> feature_names;
  Matrix features;
  std::vector<int> labels;              // 0/1
  std::array<double, 2> label_values{};  // raw target value mapped to 0 and 1
  std::size_t dropped_rows = 0;         // rows with missing or unparseable cells
};

struct LabeledSet {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Count of label 0 and label 1.
std::array<std::size_t, 2> class_counts(std::span<const int> labels);

/// Reads a PMLB-style table: tab separated, header row, a `target` column,
/// optionally gzip compressed. Rows with a missing or unparseable cell are
/// dropped and counted.
Dataset load_pmlb(const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct Partitions {
  LabeledSet train;
  LabeledSet val;
  LabeledSet test;
};

/// Stratified three-way split. Every partition receives at least one instance
/// of each class.
Partitions split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

/// Removes the labels of round(q * |pool|) instances, stratified by class.
/// Returns (labeled, unlabeled features).
std::pair<LabeledSet, Matrix> mask_labels(const LabeledSet& pool, double q, std::uint64_t seed);

/// The four partitions of a semi-supervised problem. Reads of the test
/// partition are counted so the evaluation protocol can be audited.
class DatasetSplit {
 public:
  DatasetSplit() = default;
  DatasetSplit(LabeledSet train_labeled, Matrix train_unlabeled, LabeledSet val, LabeledSet test, double q);

  LabeledSet train_labeled;
  Matrix train_unlabeled;
  LabeledSet val;
  double q = 0.0;

  const LabeledSet& test() const noexcept {
    ++test_reads_;
    return test_;
  }
  std::size_t test_reads() const noexcept { return test_reads_; }

  /// Labeled training data followed by validation data.
  LabeledSet labeled_union() const;

  friend DatasetSplit standardize(DatasetSplit splits);

 private:
  LabeledSet test_;
  mutable std::size_t test_reads_ = 0;
};

/// Zero mean, unit variance per column, fitted on all training features
/// (labeled and unlabeled) and applied to every partition. Constant columns
/// are only shifted.
DatasetSplit standardize(DatasetSplit splits);

/// split + mask_labels + standardize.
DatasetSplit make_split(const Dataset& dataset, double q, const SplitRatios& ratios, std::uint64_t split_seed,
                        std::uint64_t mask_seed);

/// $NCEVO_CACHE_DIR, else $XDG_CACHE_HOME/ncevo, else ~/.cache/ncevo.
std::filesystem::path default_cache_dir();

/// Looks for <dir>/<name>/<name>.tsv.gz, <dir>/<name>.tsv.gz and the
/// uncompressed variants in each directory, in order.
std::optional<std::filesystem::path> find_dataset(const std::string& name,
                                                  std::span<const std::filesystem::path> dirs);

/// Downloads a dataset from the PMLB repository into <cache>/<name>/ unless
/// it is already present. Returns the local path.
std::filesystem::path fetch_pmlb(const std::string& name, const std::filesystem::path& cache_dir);

std::string pmlb_url(const std::string& name);

}  // namespace ncevo
