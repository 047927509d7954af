#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ncevo/random.hpp"

namespace ncevo {

enum class Activation : std::uint8_t { identity, relu, elu, softplus, softsign, sigmoid, tanh };
enum class Initializer : std::uint8_t { normal, uniform, xavier };

inline constexpr std::array<Activation, 7> kActivations = {
    Activation::identity, Activation::relu,    Activation::elu,  Activation::softplus,
    Activation::softsign, Activation::sigmoid, Activation::tanh,
};
inline constexpr std::array<Initializer, 3> kInitializers = {
    Initializer::normal, Initializer::uniform, Initializer::xavier,
};

std::string_view to_string(Activation a);
std::string_view to_string(Initializer i);
Activation parse_activation(std::string_view name);
Initializer parse_initializer(std::string_view name);

/// Bounds on the architectures the search may produce.
struct SearchConstraints {
  std::size_t max_depth = 8;
  std::size_t max_width = 8;

  friend bool operator==(const SearchConstraints&, const SearchConstraints&) = default;
};

/// The evolvable genome: one entry per hidden layer in each list. Depth is the
/// common list length; there is no separate layer-count field.
struct NetworkDescriptor {
  std::vector<std::size_t> hidden_widths;
  std::vector<Activation> activations;
  std::vector<Initializer> initializers;
  std::vector<bool> dropout;
  std::vector<bool> batch_norm;

  std::size_t depth() const noexcept { return hidden_widths.size(); }
  std::size_t neuron_count() const noexcept;

  /// Convenience for tests and tools: a descriptor with uniform per-layer settings.
  static NetworkDescriptor uniform(std::vector<std::size_t> widths, Activation act,
                                   Initializer init = Initializer::xavier, bool dropout = false,
                                   bool batch_norm = false);

  friend bool operator==(const NetworkDescriptor&, const NetworkDescriptor&) = default;
};

/// Every violated invariant, as human-readable messages. Empty iff valid.
std::vector<std::string> validate(const NetworkDescriptor& d, const SearchConstraints& c);

/// One random hidden layer appended to `d` at position `pos`.
void insert_random_layer(NetworkDescriptor& d, std::size_t pos, const SearchConstraints& c, Rng& rng);

NetworkDescriptor random_descriptor(const SearchConstraints& c, Rng& rng);

/// `widths=3,5;act=relu,tanh;init=xavier,normal;drop=0,1;bn=1,0`
std::string to_text(const NetworkDescriptor& d);
NetworkDescriptor from_text(std::string_view text);

}  // namespace ncevo
