#include "ncevo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "ncevo/errors.hpp"

namespace ncevo {

namespace {

double sigmoid(double u) noexcept {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double softplus(double u) noexcept { return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

/// -y log p - (1-y) log(1-p) written in terms of the logit s.
double bce_from_logit(double s, int y) noexcept { return softplus(s) - (y == 1 ? s : 0.0); }

void check_labels(std::span<const int> labels) {
  for (int y : labels)
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
}

void check_batch(const Network& net, const Matrix& batch) {
  if (batch.cols() != net.input_dim())
    throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                     std::to_string(net.input_dim()));
}

// out = in * W + b
Matrix affine(const Matrix& in, const DenseLayer& layer) {
  const std::size_t rows = in.rows(), fan_in = layer.fan_in(), width = layer.width();
  Matrix out(rows, width);
  for (std::size_t i = 0; i < rows; ++i) {
    auto o = out.row(i);
    std::copy(layer.biases.begin(), layer.biases.end(), o.begin());
    for (std::size_t k = 0; k < fan_in; ++k) {
      const double x = in(i, k);
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < width; ++j) o[j] += x * layer.weights(k, j);
    }
  }
  return out;
}

Matrix layer_inference(const Matrix& in, const DenseLayer& layer) {
  Matrix z = affine(in, layer);
  const std::size_t width = layer.width();
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto r = z.row(i);
    for (std::size_t j = 0; j < width; ++j) {
      double u = r[j];
      if (layer.has_batch_norm) {
        const auto& bn = layer.batch_norm;
        u = (u - bn.running_mean[j]) / std::sqrt(bn.running_var[j] + kBatchNormEpsilon) * bn.gamma[j] +
            bn.beta[j];
      }
      r[j] = activate(layer.activation, u);
    }
  }
  return z;
}

struct LayerCache {
  Matrix z;     // affine output
  Matrix xhat;  // normalised z (batch norm only)
  Matrix u;     // activation input
  Matrix out;   // layer output after activation and dropout
  std::vector<double> mean, var, inv_std;
};

struct TrainingForward {
  std::vector<LayerCache> hidden;
  std::vector<double> logits;
};

TrainingForward forward_training(const Network& net, const Matrix& batch, const DropoutMasks& masks) {
  const auto& layers = net.layers();
  const std::size_t rows = batch.rows();
  if (masks.layers.size() != net.hidden_layer_count()) throw ShapeError("dropout mask count mismatch");
  TrainingForward fw;
  fw.hidden.resize(net.hidden_layer_count());
  const Matrix* in = &batch;
  for (std::size_t l = 0; l < net.hidden_layer_count(); ++l) {
    const DenseLayer& layer = layers[l];
    LayerCache& c = fw.hidden[l];
    const std::size_t width = layer.width();
    c.z = affine(*in, layer);
    if (layer.has_batch_norm) {
      c.mean.assign(width, 0.0);
      c.var.assign(width, 0.0);
      c.inv_std.assign(width, 0.0);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < width; ++j) c.mean[j] += c.z(i, j);
      for (auto& m : c.mean) m /= static_cast<double>(rows);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < width; ++j) {
          const double d = c.z(i, j) - c.mean[j];
          c.var[j] += d * d;
        }
      for (std::size_t j = 0; j < width; ++j) {
        c.var[j] /= static_cast<double>(rows);
        c.inv_std[j] = 1.0 / std::sqrt(c.var[j] + kBatchNormEpsilon);
      }
      c.xhat = Matrix(rows, width);
      c.u = Matrix(rows, width);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < width; ++j) {
          c.xhat(i, j) = (c.z(i, j) - c.mean[j]) * c.inv_std[j];
          c.u(i, j) = c.xhat(i, j) * layer.batch_norm.gamma[j] + layer.batch_norm.beta[j];
        }
    } else {
      c.u = c.z;
    }
    c.out = Matrix(rows, width);
    const Matrix& mask = masks.layers[l];
    if (layer.has_dropout && (mask.rows() != rows || mask.cols() != width))
      throw ShapeError("dropout mask shape mismatch");
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        double a = activate(layer.activation, c.u(i, j));
        if (layer.has_dropout) a *= mask(i, j);
        c.out(i, j) = a;
      }
    in = &c.out;
  }
  const Matrix head = affine(*in, net.head());
  fw.logits.assign(head.data().begin(), head.data().end());
  return fw;
}

double mean_loss(std::span<const double> logits, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += bce_from_logit(logits[i], labels[i]);
  return total / static_cast<double>(logits.size());
}

// grad.weights = in^T * dz, grad.biases = column sums of dz; returns dz * W^T
Matrix affine_backward(const Matrix& in, const Matrix& dz, const DenseLayer& layer, LayerGradients& g) {
  const std::size_t rows = in.rows(), fan_in = layer.fan_in(), width = layer.width();
  g.weights = Matrix(fan_in, width);
  g.biases.assign(width, 0.0);
  Matrix din(rows, fan_in);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < width; ++j) g.biases[j] += dz(i, j);
    for (std::size_t k = 0; k < fan_in; ++k) {
      const double x = in(i, k);
      double acc = 0.0;
      for (std::size_t j = 0; j < width; ++j) {
        g.weights(k, j) += x * dz(i, j);
        acc += dz(i, j) * layer.weights(k, j);
      }
      din(i, k) = acc;
    }
  }
  return din;
}

void check_finite(const Network& net, std::size_t epoch, std::size_t batch) {
  for (const auto& layer : net.layers()) {
    auto bad = [](double v) { return !std::isfinite(v); };
    if (std::any_of(layer.weights.data().begin(), layer.weights.data().end(), bad) ||
        std::any_of(layer.biases.begin(), layer.biases.end(), bad))
      throw TrainingError("non-finite weight", epoch, batch);
    if (layer.has_batch_norm) {
      const auto& bn = layer.batch_norm;
      for (const auto* v : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var})
        if (std::any_of(v->begin(), v->end(), bad)) throw TrainingError("non-finite batch-norm state", epoch, batch);
    }
  }
}

}  // namespace

double activate(Activation a, double u) noexcept {
  switch (a) {
    case Activation::identity: return u;
    case Activation::relu: return u > 0 ? u : 0.0;
    case Activation::elu: return u > 0 ? u : kEluAlpha * std::expm1(u);
    case Activation::softplus: return softplus(u);
    case Activation::softsign: return u / (1.0 + std::abs(u));
    case Activation::sigmoid: return sigmoid(u);
    case Activation::tanh: return std::tanh(u);
  }
  return u;
}

double activate_derivative(Activation a, double u) noexcept {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return u > 0 ? 1.0 : 0.0;
    case Activation::elu: return u > 0 ? 1.0 : kEluAlpha * std::exp(u);
    case Activation::softplus: return sigmoid(u);
    case Activation::softsign: {
      const double d = 1.0 + std::abs(u);
      return 1.0 / (d * d);
    }
    case Activation::sigmoid: {
      const double s = sigmoid(u);
      return s * (1.0 - s);
    }
    case Activation::tanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::check() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
}

// ---- Network ----

Network::Network(std::size_t input_dim, std::vector<DenseLayer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  check_shapes();
}

std::size_t Network::neuron_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) n += layers_[l].width();
  return n;
}

std::vector<std::size_t> Network::hidden_widths() const {
  std::vector<std::size_t> w;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) w.push_back(layers_[l].width());
  return w;
}

void Network::check_shapes() const {
  if (input_dim_ < 1) throw ShapeError("input_dim must be >= 1");
  if (layers_.size() < 2) throw ShapeError("network needs at least one hidden layer and a head");
  std::size_t fan_in = input_dim_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.fan_in() != fan_in)
      throw ShapeError("layer " + std::to_string(l) + " expects " + std::to_string(layer.fan_in()) +
                       " inputs, previous layer provides " + std::to_string(fan_in));
    if (layer.width() < 1 || layer.biases.size() != layer.width())
      throw ShapeError("layer " + std::to_string(l) + " has inconsistent bias length");
    if (layer.has_batch_norm) {
      const auto& bn = layer.batch_norm;
      for (const auto* v : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var})
        if (v->size() != layer.width())
          throw ShapeError("layer " + std::to_string(l) + " has inconsistent batch-norm state");
    }
    fan_in = layer.width();
  }
  if (head().width() != 1) throw ShapeError("output head must have a single unit");
}

std::pair<std::size_t, std::size_t> ActivationTrace::locate(std::size_t neuron) const {
  for (std::size_t l = layer_offsets.size(); l-- > 0;)
    if (neuron >= layer_offsets[l]) return {l, neuron - layer_offsets[l]};
  throw ShapeError("neuron index out of range");
}

ActivationTrace ActivationTrace::from_values(Matrix values, std::vector<std::size_t> layer_widths) {
  ActivationTrace t;
  std::size_t offset = 0;
  for (std::size_t w : layer_widths) {
    t.layer_offsets.push_back(offset);
    offset += w;
  }
  if (offset != values.cols()) throw ShapeError("layer widths do not sum to the trace width");
  t.values = std::move(values);
  t.layer_widths = std::move(layer_widths);
  return t;
}

Network build_network(const NetworkDescriptor& descriptor, std::size_t input_dim, std::uint64_t seed,
                      const SearchConstraints& constraints) {
  const auto violations = validate(descriptor, constraints);
  if (!violations.empty()) {
    std::string msg = "invalid descriptor:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw ConstructionError(msg);
  }
  if (input_dim < 1) throw ConstructionError("input_dim must be >= 1");

  Rng rng(seed);
  auto draw = [&rng](Initializer init, std::size_t fan_in, std::size_t fan_out) {
    switch (init) {
      case Initializer::normal: return std::normal_distribution<double>(0.0, kNormalInitStddev)(rng);
      case Initializer::uniform:
        return std::uniform_real_distribution<double>(-kUniformInitLimit, kUniformInitLimit)(rng);
      case Initializer::xavier:
        return std::normal_distribution<double>(
            0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)))(rng);
    }
    return 0.0;
  };
  auto make_layer = [&](std::size_t fan_in, std::size_t width, Initializer init) {
    DenseLayer layer;
    layer.weights = Matrix(fan_in, width);
    for (double& w : layer.weights.data()) w = draw(init, fan_in, width);
    layer.biases.assign(width, 0.0);
    return layer;
  };

  std::vector<DenseLayer> layers;
  std::size_t fan_in = input_dim;
  for (std::size_t j = 0; j < descriptor.depth(); ++j) {
    const std::size_t width = descriptor.hidden_widths[j];
    DenseLayer layer = make_layer(fan_in, width, descriptor.initializers[j]);
    layer.activation = descriptor.activations[j];
    layer.has_dropout = descriptor.dropout[j];
    layer.dropout_rate = layer.has_dropout ? kDropoutRate : 0.0;
    layer.has_batch_norm = descriptor.batch_norm[j];
    if (layer.has_batch_norm)
      layer.batch_norm = BatchNormState{std::vector<double>(width, 1.0), std::vector<double>(width, 0.0),
                                        std::vector<double>(width, 0.0), std::vector<double>(width, 1.0)};
    layers.push_back(std::move(layer));
    fan_in = width;
  }
  DenseLayer head = make_layer(fan_in, 1, Initializer::xavier);
  head.activation = Activation::sigmoid;
  layers.push_back(std::move(head));
  return Network(input_dim, std::move(layers));
}

ForwardResult forward(const Network& net, const Matrix& batch, bool trace) {
  check_batch(net, batch);
  const auto& layers = net.layers();
  ForwardResult result;
  Matrix values;
  if (trace) values = Matrix(batch.rows(), net.neuron_count());
  Matrix current = batch;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < net.hidden_layer_count(); ++l) {
    current = layer_inference(current, layers[l]);
    if (trace) {
      for (std::size_t i = 0; i < current.rows(); ++i)
        std::copy(current.row(i).begin(), current.row(i).end(), values.row(i).begin() + offset);
      offset += current.cols();
    }
  }
  const Matrix head = affine(current, net.head());
  result.probabilities.resize(batch.rows());
  for (std::size_t i = 0; i < batch.rows(); ++i) result.probabilities[i] = sigmoid(head(i, 0));
  if (trace) result.trace = ActivationTrace::from_values(std::move(values), net.hidden_widths());
  return result;
}

std::vector<double> predict_proba(const Network& net, const Matrix& features) {
  return forward(net, features, false).probabilities;
}

double inference_loss(const Network& net, const Matrix& features, std::span<const int> labels) {
  check_batch(net, features);
  if (labels.size() != features.rows()) throw ShapeError("label count does not match rows");
  if (features.rows() == 0) throw DataError("loss over an empty set");
  Matrix current = features;
  for (std::size_t l = 0; l < net.hidden_layer_count(); ++l) current = layer_inference(current, net.layers()[l]);
  const Matrix head = affine(current, net.head());
  return mean_loss(head.data(), labels);
}

DropoutMasks sample_dropout_masks(const Network& net, std::size_t batch_rows, Rng& rng) {
  DropoutMasks masks;
  for (std::size_t l = 0; l < net.hidden_layer_count(); ++l) {
    const auto& layer = net.layers()[l];
    if (!layer.has_dropout) {
      masks.layers.emplace_back();
      continue;
    }
    Matrix m(batch_rows, layer.width());
    std::bernoulli_distribution keep(1.0 - layer.dropout_rate);
    const double scale = 1.0 / (1.0 - layer.dropout_rate);
    for (double& v : m.data()) v = keep(rng) ? scale : 0.0;
    masks.layers.push_back(std::move(m));
  }
  return masks;
}

DropoutMasks no_dropout(const Network& net) {
  DropoutMasks masks;
  for (std::size_t l = 0; l < net.hidden_layer_count(); ++l) masks.layers.emplace_back();
  return masks;
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> out;
  for (const auto& g : layers) {
    out.insert(out.end(), g.weights.data().begin(), g.weights.data().end());
    out.insert(out.end(), g.biases.begin(), g.biases.end());
    out.insert(out.end(), g.gamma.begin(), g.gamma.end());
    out.insert(out.end(), g.beta.begin(), g.beta.end());
  }
  return out;
}

std::vector<double*> parameters(Network& net) {
  std::vector<double*> out;
  for (auto& layer : net.layers()) {
    for (double& w : layer.weights.data()) out.push_back(&w);
    for (double& b : layer.biases) out.push_back(&b);
    if (layer.has_batch_norm) {
      for (double& g : layer.batch_norm.gamma) out.push_back(&g);
      for (double& b : layer.batch_norm.beta) out.push_back(&b);
    }
  }
  return out;
}

double training_loss(const Network& net, const Matrix& batch, std::span<const int> labels,
                     const DropoutMasks& masks) {
  check_batch(net, batch);
  if (labels.size() != batch.rows()) throw ShapeError("label count does not match rows");
  const auto fw = forward_training(net, batch, masks);
  return mean_loss(fw.logits, labels);
}

namespace {

double backward(const Network& net, const Matrix& batch, std::span<const int> labels, const DropoutMasks& masks,
                const TrainingForward& fw, Gradients& grads) {
  const auto& layers = net.layers();
  const std::size_t rows = batch.rows();
  const double inv_rows = 1.0 / static_cast<double>(rows);
  grads.layers.assign(layers.size(), LayerGradients{});

  Matrix d(rows, 1);
  for (std::size_t i = 0; i < rows; ++i) d(i, 0) = (sigmoid(fw.logits[i]) - labels[i]) * inv_rows;
  const std::size_t hidden = net.hidden_layer_count();
  const Matrix& head_in = hidden ? fw.hidden.back().out : batch;
  Matrix d_out = affine_backward(head_in, d, net.head(), grads.layers.back());

  for (std::size_t l = hidden; l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const LayerCache& c = fw.hidden[l];
    LayerGradients& g = grads.layers[l];
    const std::size_t width = layer.width();

    Matrix du(rows, width);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        double v = d_out(i, j);
        if (layer.has_dropout) v *= masks.layers[l](i, j);
        du(i, j) = v * activate_derivative(layer.activation, c.u(i, j));
      }

    Matrix dz;
    if (layer.has_batch_norm) {
      const auto& gamma = layer.batch_norm.gamma;
      g.gamma.assign(width, 0.0);
      g.beta.assign(width, 0.0);
      std::vector<double> sum_dxhat(width, 0.0), sum_dxhat_xhat(width, 0.0);
      Matrix dxhat(rows, width);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < width; ++j) {
          g.gamma[j] += du(i, j) * c.xhat(i, j);
          g.beta[j] += du(i, j);
          dxhat(i, j) = du(i, j) * gamma[j];
          sum_dxhat[j] += dxhat(i, j);
          sum_dxhat_xhat[j] += dxhat(i, j) * c.xhat(i, j);
        }
      dz = Matrix(rows, width);
      const double n = static_cast<double>(rows);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < width; ++j)
          dz(i, j) = c.inv_std[j] / n * (n * dxhat(i, j) - sum_dxhat[j] - c.xhat(i, j) * sum_dxhat_xhat[j]);
    } else {
      dz = std::move(du);
    }
    const Matrix& in = l ? fw.hidden[l - 1].out : batch;
    d_out = affine_backward(in, dz, layer, g);
  }
  return mean_loss(fw.logits, labels);
}

struct AdamState {
  std::vector<double> m, v;
  std::size_t step = 0;
};

}  // namespace

double loss_and_gradients(const Network& net, const Matrix& batch, std::span<const int> labels,
                          const DropoutMasks& masks, Gradients& grads) {
  check_batch(net, batch);
  if (labels.size() != batch.rows()) throw ShapeError("label count does not match rows");
  const auto fw = forward_training(net, batch, masks);
  return backward(net, batch, labels, masks, fw, grads);
}

Network train(Network net, const Matrix& features, std::span<const int> labels, const TrainConfig& config,
              TrainHistory* history) {
  config.check();
  check_batch(net, features);
  net.check_shapes();
  if (features.rows() == 0) throw DataError("training set is empty");
  if (labels.size() != features.rows()) throw ShapeError("label count does not match rows");
  check_labels(labels);

  Rng rng(config.seed);
  std::vector<std::size_t> order(features.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto params = parameters(net);
  AdamState adam;
  if (config.optimizer == Optimizer::adam) {
    adam.m.assign(params.size(), 0.0);
    adam.v.assign(params.size(), 0.0);
  }
  Gradients grads;
  std::vector<int> batch_labels;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix batch = features.select_rows(idx);
      batch_labels.clear();
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);

      const DropoutMasks masks = sample_dropout_masks(net, batch.rows(), rng);
      const auto fw = forward_training(net, batch, masks);
      const double loss = backward(net, batch, batch_labels, masks, fw, grads);
      if (!std::isfinite(loss)) throw TrainingError("non-finite loss", epoch, batch_index);
      const auto flat = grads.flatten();
      if (std::any_of(flat.begin(), flat.end(), [](double g) { return !std::isfinite(g); }))
        throw TrainingError("non-finite gradient", epoch, batch_index);

      for (std::size_t l = 0; l < net.hidden_layer_count(); ++l) {
        auto& layer = net.layers()[l];
        if (!layer.has_batch_norm) continue;
        auto& bn = layer.batch_norm;
        const auto& c = fw.hidden[l];
        for (std::size_t j = 0; j < layer.width(); ++j) {
          bn.running_mean[j] = kBatchNormMomentum * bn.running_mean[j] + (1 - kBatchNormMomentum) * c.mean[j];
          bn.running_var[j] = kBatchNormMomentum * bn.running_var[j] + (1 - kBatchNormMomentum) * c.var[j];
        }
      }

      if (config.optimizer == Optimizer::sgd) {
        for (std::size_t p = 0; p < params.size(); ++p) *params[p] -= config.learning_rate * flat[p];
      } else {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-7;
        ++adam.step;
        const double c1 = 1 - std::pow(beta1, static_cast<double>(adam.step));
        const double c2 = 1 - std::pow(beta2, static_cast<double>(adam.step));
        for (std::size_t p = 0; p < params.size(); ++p) {
          adam.m[p] = beta1 * adam.m[p] + (1 - beta1) * flat[p];
          adam.v[p] = beta2 * adam.v[p] + (1 - beta2) * flat[p] * flat[p];
          *params[p] -= config.learning_rate * (adam.m[p] / c1) / (std::sqrt(adam.v[p] / c2) + eps);
        }
      }
      check_finite(net, epoch, batch_index);
    }
    if (history) history->epoch_loss.push_back(inference_loss(net, features, labels));
  }
  return net;
}

void write_weights(std::ostream& os, const Network& net) {
  const auto& layers = net.layers();
  os << "layers " << layers.size() << '\n';
  os.precision(17);
  for (const auto& layer : layers) {
    os << layer.fan_in() << ' ' << layer.width() << '\n';
    for (std::size_t r = 0; r < layer.fan_in(); ++r) {
      for (std::size_t c = 0; c < layer.width(); ++c) os << (c ? " " : "") << layer.weights(r, c);
      os << '\n';
    }
    for (std::size_t c = 0; c < layer.width(); ++c) os << (c ? " " : "") << layer.biases[c];
    os << '\n';
  }
}

}  // namespace ncevo
