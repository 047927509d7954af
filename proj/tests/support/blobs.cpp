#include "support/blobs.hpp"

#include "ncevo/fitness.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace testdata {

ncevo::Dataset blobs(std::size_t per_class, std::size_t dim, double separation, double margin, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  ncevo::Dataset d;
  d.name = "blobs";
  d.features = ncevo::Matrix(0, dim);
  d.label_values = {0.0, 1.0};
  for (std::size_t k = 0; k < dim; ++k) d.feature_names.push_back("x" + std::to_string(k));
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    const double sign = label ? 1.0 : -1.0;
    do {
      for (std::size_t k = 0; k < dim; ++k) row[k] = noise(rng);
      row[0] += sign * separation / 2.0;
    } while (sign * row[0] < margin);
    d.features.append_row(row);
    d.labels.push_back(label);
  }
  return d;
}

ncevo::TrainConfig blob_train_config() {
  ncevo::TrainConfig cfg;
  cfg.learning_rate = 0.1;
  return cfg;
}

ncevo::Dataset noise(std::size_t per_class, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  ncevo::Dataset d;
  d.name = "noise";
  d.features = ncevo::Matrix(0, dim);
  d.label_values = {0.0, 1.0};
  for (std::size_t k = 0; k < dim; ++k) d.feature_names.push_back("x" + std::to_string(k));
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    for (auto& v : row) v = unit(rng);
    d.features.append_row(row);
    d.labels.push_back(static_cast<int>(i % 2));
  }
  return d;
}

RetNoopCase ret_noop_case() {
  RetNoopCase c;
  c.split = ncevo::make_split(noise(60, 4, 5), 0.6, {}, 11, 12);
  c.candidate = ncevo::NetworkDescriptor::uniform({3}, ncevo::Activation::identity, ncevo::Initializer::normal);
  c.train.epochs = 5;
  c.seed = 2024;
  const auto net = ncevo::build_and_train(c.candidate, c.split.train_labeled, c.train, c.seed);
  const auto p = ncevo::predict_proba(net, c.split.train_unlabeled);
  c.min_p = *std::min_element(p.begin(), p.end());
  c.max_p = *std::max_element(p.begin(), p.end());
  return c;
}

}  // namespace testdata
