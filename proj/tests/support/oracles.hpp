#pragma once

// Reference implementations used only by tests. They favour the most literal
// formulation over speed and share no code with the library paths they check.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ncevo/matrix.hpp"
#include "ncevo/nn.hpp"

namespace oracle {

struct Count {
  std::size_t hits = 0;
  std::size_t total = 0;

  double ratio() const { return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0; }
};

// Values are instance x neuron; widths split the neuron axis into layers.
Count nc(const ncevo::Matrix& values, double threshold);
Count tknc(const ncevo::Matrix& values, std::span<const std::size_t> widths, std::size_t k);
Count kmn(const ncevo::Matrix& values, std::span<const double> lower, std::span<const double> upper,
          std::size_t sections);
Count nbc(const ncevo::Matrix& values, std::span<const double> lower, std::span<const double> upper);
Count snac(const ncevo::Matrix& values, std::span<const double> upper);

// Column-wise min and max.
void bounds(const ncevo::Matrix& values, std::vector<double>& lower, std::vector<double>& upper);

struct Recomputed {
  ncevo::Matrix hidden;  // instance x neuron
  std::vector<double> probabilities;
};

// Inference forward pass written neuron by neuron.
Recomputed forward(const ncevo::Network& net, const ncevo::Matrix& batch);

// Central differences of training_loss with respect to parameters().
std::vector<double> numeric_gradient(ncevo::Network net, const ncevo::Matrix& batch, std::span<const int> labels,
                                     const ncevo::DropoutMasks& masks, double step);

}  // namespace oracle

namespace oracle {

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
};

// Builds the descriptor, scatters every parameter to N(0, 0.5^2) so gradients
// are not uniformly tiny, samples a batch and dropout masks, and compares the
// analytic gradient with central differences. Relative error per parameter is
// |a - n| / max(|a|, |n|, 1e-6).
GradientCheck check_gradients(const ncevo::NetworkDescriptor& descriptor, std::size_t input_dim,
                              std::size_t batch_rows, std::uint64_t seed);

}  // namespace oracle

#include <array>
#include <string>

#include "ncevo/coverage.hpp"

namespace oracle {

struct MetricComparison {
  std::string name;
  double library = 0.0;
  Count reference;

  // Integer count implied by the library ratio equals the oracle count, and
  // the ratios agree to 1e-12.
  bool agrees() const;
};

// One random (network, batch) pair: depth <= 3, widths <= 5, batch <= 10
// instances, profile taken on a reference set that shares some rows with the
// batch so boundary values occur. Returns all five metrics.
std::array<MetricComparison, 5> compare_coverage(std::uint64_t seed);

}  // namespace oracle
