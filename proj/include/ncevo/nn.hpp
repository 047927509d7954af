#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ncevo/descriptor.hpp"
#include "ncevo/matrix.hpp"

namespace ncevo {

// Initialisation and regularisation constants. These are written to every
// resolved run configuration so results can be reproduced.
inline constexpr double kNormalInitStddev = 0.05;
inline constexpr double kUniformInitLimit = 0.05;
inline constexpr double kDropoutRate = 0.5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kEluAlpha = 1.0;

double activate(Activation a, double u) noexcept;
/// d activate(a, u) / du.
double activate_derivative(Activation a, double u) noexcept;

enum class Optimizer : std::uint8_t { sgd, adam };

std::string_view to_string(Optimizer o);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 10;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::sgd;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of range.
  void check() const;
};

struct BatchNormState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

/// z = x W + b, then optional batch normalisation, activation, optional dropout.
struct DenseLayer {
  Matrix weights;               // fan_in x width
  std::vector<double> biases;   // width
  Activation activation = Activation::identity;
  bool has_batch_norm = false;
  bool has_dropout = false;
  double dropout_rate = 0.0;
  BatchNormState batch_norm;    // sized to width only when has_batch_norm

  std::size_t fan_in() const noexcept { return weights.rows(); }
  std::size_t width() const noexcept { return weights.cols(); }
};

/// A materialised MLP. The last layer is the single-unit sigmoid head; every
/// earlier layer is hidden.
class Network {
 public:
  Network(std::size_t input_dim, std::vector<DenseLayer> layers);

  std::size_t input_dim() const noexcept { return input_dim_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  /// Direct parameter access; shapes must be preserved.
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  std::size_t hidden_layer_count() const noexcept { return layers_.size() - 1; }
  const DenseLayer& head() const noexcept { return layers_.back(); }
  /// Total hidden neurons N; the head is excluded.
  std::size_t neuron_count() const noexcept;
  std::vector<std::size_t> hidden_widths() const;

  /// Throws ShapeError unless the layer shapes chain from input_dim to 1.
  void check_shapes() const;

 private:
  std::size_t input_dim_;
  std::vector<DenseLayer> layers_;
};

/// Post-activation outputs of every hidden neuron for a batch.
struct ActivationTrace {
  Matrix values;                          // batch x N
  std::vector<std::size_t> layer_widths;  // per hidden layer
  std::vector<std::size_t> layer_offsets; // first flat index of each layer

  std::size_t neuron_count() const noexcept { return values.cols(); }
  std::size_t instance_count() const noexcept { return values.rows(); }
  /// (layer, position within layer) of a flat neuron index.
  std::pair<std::size_t, std::size_t> locate(std::size_t neuron) const;

  /// Builds offsets from widths. Throws ShapeError if widths do not sum to values.cols().
  static ActivationTrace from_values(Matrix values, std::vector<std::size_t> layer_widths);
};

struct ForwardResult {
  std::vector<double> probabilities;
  std::optional<ActivationTrace> trace;
};

Network build_network(const NetworkDescriptor& descriptor, std::size_t input_dim, std::uint64_t seed,
                      const SearchConstraints& constraints = {});

/// Inference-mode forward pass: dropout off, batch norm on running statistics.
ForwardResult forward(const Network& net, const Matrix& batch, bool trace);
std::vector<double> predict_proba(const Network& net, const Matrix& features);

/// Mean binary cross-entropy in inference mode.
double inference_loss(const Network& net, const Matrix& features, std::span<const int> labels);

// ---- training-mode primitives, exposed for gradient checking ----

/// Per hidden layer dropout multipliers (0 or 1/(1-rate)); an empty matrix for
/// layers without dropout.
struct DropoutMasks {
  std::vector<Matrix> layers;
};
DropoutMasks sample_dropout_masks(const Network& net, std::size_t batch_rows, Rng& rng);
/// Masks that keep every unit (used to disable dropout in checks).
DropoutMasks no_dropout(const Network& net);

struct LayerGradients {
  Matrix weights;
  std::vector<double> biases;
  std::vector<double> gamma;
  std::vector<double> beta;
};

struct Gradients {
  std::vector<LayerGradients> layers;
  /// Same order as parameters().
  std::vector<double> flatten() const;
};

/// Every trainable scalar: per layer W (row-major), b, then gamma, beta when
/// batch norm is enabled.
std::vector<double*> parameters(Network& net);

/// Training-mode loss: batch-statistics normalisation, fixed dropout masks.
double training_loss(const Network& net, const Matrix& batch, std::span<const int> labels,
                     const DropoutMasks& masks);
/// Training-mode loss and its exact gradient with respect to parameters().
double loss_and_gradients(const Network& net, const Matrix& batch, std::span<const int> labels,
                          const DropoutMasks& masks, Gradients& grads);

struct TrainHistory {
  std::vector<double> epoch_loss;  // inference-mode loss after each epoch
};

/// Mini-batch training on binary cross-entropy. Throws TrainingError on any
/// non-finite loss, gradient or weight.
Network train(Network net, const Matrix& features, std::span<const int> labels,
              const TrainConfig& config, TrainHistory* history = nullptr);

/// Text dump: `layers <count>` then, per layer, `<rows> <cols>` followed by
/// row-major weights and one line of biases.
void write_weights(std::ostream& os, const Network& net);

}  // namespace ncevo
