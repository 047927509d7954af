#include "ncevo/fitness.hpp"

#include <algorithm>
#include <cmath>

#include "ncevo/errors.hpp"
#include "ncevo/random.hpp"

namespace ncevo {

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("prediction and label counts differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == 1, t = truth[i] == 1;
    if (t && p) ++c.tp;
    else if (t) ++c.fn;
    else if (p) ++c.fp;
    else ++c.tn;
  }
  return c;
}

double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  const auto c = confusion(predicted, truth);
  if (c.positives() == 0 || c.negatives() == 0)
    throw DataError("balanced accuracy needs both classes in the true labels");
  return 0.5 * (static_cast<double>(c.tp) / static_cast<double>(c.positives()) +
                static_cast<double>(c.tn) / static_cast<double>(c.negatives()));
}

std::vector<int> to_labels(std::span<const double> probabilities) {
  std::vector<int> out(probabilities.size());
  std::transform(probabilities.begin(), probabilities.end(), out.begin(), [](double p) { return p >= 0.5 ? 1 : 0; });
  return out;
}

double cert(std::span<const double> probabilities) {
  if (probabilities.empty()) throw DataError("certainty of an empty prediction set");
  double total = 0.0;
  for (double p : probabilities) total += std::max(p, 1.0 - p);
  return total / static_cast<double>(probabilities.size());
}

void FitnessSpec::check() const {
  if (!(ret_low < ret_high)) throw ConfigError("ret_low must be below ret_high");
  if (strategy == Strategy::coverage) coverage.check();
}

std::string FitnessSpec::label() const {
  switch (strategy) {
    case Strategy::supervised: return "SUPERVISED";
    case Strategy::coverage: return std::string(to_string(coverage.metric));
    case Strategy::cert: return "CERT";
    case Strategy::ret: return "RET";
  }
  return "?";
}

FitnessSpec FitnessSpec::parse(std::string_view label, const CoverageConfig& coverage_defaults) {
  FitnessSpec spec;
  spec.coverage = coverage_defaults;
  if (label == "SUPERVISED") spec.strategy = Strategy::supervised;
  else if (label == "CERT") spec.strategy = Strategy::cert;
  else if (label == "RET") spec.strategy = Strategy::ret;
  else {
    spec.strategy = Strategy::coverage;
    spec.coverage.metric = parse_coverage_metric(label);
  }
  return spec;
}

double blend(double q, double auxiliary, double balanced_acc) noexcept {
  return q * auxiliary + (1.0 - q) * balanced_acc;
}

Network build_and_train(const NetworkDescriptor& candidate, const LabeledSet& data, const TrainConfig& train,
                        std::uint64_t seed) {
  TrainConfig cfg = train;
  cfg.seed = derive_seed(seed, {1});
  // Search bounds are enforced by the evolution loop; here any valid shape is accepted.
  const std::size_t widest =
      candidate.hidden_widths.empty() ? 1 : *std::max_element(candidate.hidden_widths.begin(), candidate.hidden_widths.end());
  Network net = build_network(candidate, data.features.cols(), derive_seed(seed, {0}),
                              SearchConstraints{std::max<std::size_t>(candidate.depth(), 1), std::max<std::size_t>(widest, 1)});
  return ncevo::train(std::move(net), data.features, data.labels, cfg);
}

namespace {

double val_accuracy(const Network& net, const DatasetSplit& splits) {
  return balanced_accuracy(to_labels(predict_proba(net, splits.val.features)), splits.val.labels);
}

void require_unlabeled(const DatasetSplit& splits) {
  if (!(splits.q > 0.0)) throw ConfigError("semi-supervised fitness needs q > 0");
  if (splits.train_unlabeled.rows() == 0) throw DataError("unlabeled training set is empty");
}

FitnessValue failed_value() { return FitnessValue{0.0, 0.0, 0.0, true}; }

}  // namespace

FitnessValue supervised_fitness(const NetworkDescriptor& candidate, const DatasetSplit& splits,
                                const TrainConfig& train, std::uint64_t seed) {
  try {
    const Network net = build_and_train(candidate, splits.train_labeled, train, seed);
    const double b = val_accuracy(net, splits);
    return FitnessValue{b, b, 0.0, false};
  } catch (const TrainingError&) {
    return failed_value();
  }
}

FitnessValue coverage_fitness(const NetworkDescriptor& candidate, const DatasetSplit& splits,
                              const CoverageConfig& coverage_config, const TrainConfig& train, std::uint64_t seed) {
  require_unlabeled(splits);
  coverage_config.check();
  try {
    const Network net = build_and_train(candidate, splits.train_labeled, train, seed);
    const ActivationProfile profile = profile_bounds(net, splits.train_labeled.features);
    const double cov = coverage(coverage_config, net, profile, splits.train_unlabeled);
    const double b = val_accuracy(net, splits);
    return FitnessValue{blend(splits.q, cov, b), b, cov, false};
  } catch (const TrainingError&) {
    return failed_value();
  }
}

FitnessValue cert_fitness(const NetworkDescriptor& candidate, const DatasetSplit& splits, const TrainConfig& train,
                          std::uint64_t seed) {
  require_unlabeled(splits);
  try {
    const Network net = build_and_train(candidate, splits.train_labeled, train, seed);
    const double c = cert(predict_proba(net, splits.train_unlabeled));
    const double b = val_accuracy(net, splits);
    return FitnessValue{blend(splits.q, c, b), b, c, false};
  } catch (const TrainingError&) {
    return failed_value();
  }
}

LabeledSet build_retraining_set(const LabeledSet& labeled, const Matrix& unlabeled,
                                std::span<const double> probabilities, double low, double high) {
  if (probabilities.size() != unlabeled.rows()) throw ShapeError("one probability per unlabeled row expected");
  LabeledSet out = labeled;
  for (std::size_t i = 0; i < unlabeled.rows(); ++i) {
    const double p = probabilities[i];
    if (p <= low || p >= high) {
      out.features.append_row(unlabeled.row(i));
      out.labels.push_back(p >= high ? 1 : 0);
    }
  }
  return out;
}

FitnessValue ret_fitness(const NetworkDescriptor& candidate, const DatasetSplit& splits, const TrainConfig& train,
                         std::uint64_t seed, double low, double high) {
  require_unlabeled(splits);
  if (!(low < high)) throw ConfigError("ret_low must be below ret_high");
  try {
    const Network first = build_and_train(candidate, splits.train_labeled, train, seed);
    const auto probs = predict_proba(first, splits.train_unlabeled);
    const LabeledSet enlarged = build_retraining_set(splits.train_labeled, splits.train_unlabeled, probs, low, high);
    const std::size_t pseudo = enlarged.size() - splits.train_labeled.size();
    if (pseudo == 0) {
      const double b = val_accuracy(first, splits);
      return FitnessValue{b, b, 0.0, false};
    }
    const Network second = build_and_train(candidate, enlarged, train, seed);
    const double b = val_accuracy(second, splits);
    return FitnessValue{b, b, static_cast<double>(pseudo), false};
  } catch (const TrainingError&) {
    return failed_value();
  }
}

FitnessValue evaluate_fitness(const FitnessSpec& spec, const NetworkDescriptor& candidate,
                              const DatasetSplit& splits, const TrainConfig& train, std::uint64_t seed) {
  spec.check();
  if (splits.q == 0.0 || spec.strategy == Strategy::supervised)
    return supervised_fitness(candidate, splits, train, seed);
  switch (spec.strategy) {
    case Strategy::coverage: return coverage_fitness(candidate, splits, spec.coverage, train, seed);
    case Strategy::cert: return cert_fitness(candidate, splits, train, seed);
    case Strategy::ret: return ret_fitness(candidate, splits, train, seed, spec.ret_low, spec.ret_high);
    case Strategy::supervised: break;
  }
  return supervised_fitness(candidate, splits, train, seed);
}

}  // namespace ncevo
