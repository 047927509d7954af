#include "ncevo/descriptor.hpp"

#include <charconv>
#include <numeric>
#include <sstream>

#include "ncevo/errors.hpp"

namespace ncevo {

namespace {

constexpr std::array<std::string_view, 7> kActivationNames = {
    "identity", "relu", "elu", "softplus", "softsign", "sigmoid", "tanh"};
constexpr std::array<std::string_view, 3> kInitializerNames = {"normal", "uniform", "xavier"};

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt(v[i]);
  }
  return out;
}

}  // namespace

std::string_view to_string(Activation a) { return kActivationNames.at(static_cast<std::size_t>(a)); }
std::string_view to_string(Initializer i) { return kInitializerNames.at(static_cast<std::size_t>(i)); }

Activation parse_activation(std::string_view name) {
  for (std::size_t i = 0; i < kActivationNames.size(); ++i)
    if (kActivationNames[i] == name) return kActivations[i];
  throw ConstructionError("unknown activation '" + std::string(name) + "'");
}

Initializer parse_initializer(std::string_view name) {
  for (std::size_t i = 0; i < kInitializerNames.size(); ++i)
    if (kInitializerNames[i] == name) return kInitializers[i];
  throw ConstructionError("unknown initializer '" + std::string(name) + "'");
}

std::size_t NetworkDescriptor::neuron_count() const noexcept {
  return std::accumulate(hidden_widths.begin(), hidden_widths.end(), std::size_t{0});
}

NetworkDescriptor NetworkDescriptor::uniform(std::vector<std::size_t> widths, Activation act,
                                             Initializer init, bool drop, bool bn) {
  const std::size_t n = widths.size();
  return NetworkDescriptor{std::move(widths), std::vector<Activation>(n, act),
                           std::vector<Initializer>(n, init), std::vector<bool>(n, drop),
                           std::vector<bool>(n, bn)};
}

std::vector<std::string> validate(const NetworkDescriptor& d, const SearchConstraints& c) {
  std::vector<std::string> v;
  if (c.max_depth < 1) v.emplace_back("max_depth must be >= 1");
  if (c.max_width < 1) v.emplace_back("max_width must be >= 1");

  const std::size_t n = d.hidden_widths.size();
  if (d.activations.size() != n || d.initializers.size() != n || d.dropout.size() != n ||
      d.batch_norm.size() != n) {
    v.emplace_back("list length mismatch");
  }
  if (n < 1) v.emplace_back("depth 0 is below the minimum depth 1");
  if (n > c.max_depth)
    v.push_back("depth " + std::to_string(n) + " exceeds max_depth " + std::to_string(c.max_depth));
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t w = d.hidden_widths[j];
    if (w < 1 || w > c.max_width)
      v.push_back("layer " + std::to_string(j) + ": width " + std::to_string(w) + " outside [1, " +
                  std::to_string(c.max_width) + "]");
  }
  for (std::size_t j = 0; j < d.activations.size(); ++j)
    if (static_cast<std::size_t>(d.activations[j]) >= kActivations.size())
      v.push_back("layer " + std::to_string(j) + ": activation id out of range");
  for (std::size_t j = 0; j < d.initializers.size(); ++j)
    if (static_cast<std::size_t>(d.initializers[j]) >= kInitializers.size())
      v.push_back("layer " + std::to_string(j) + ": initializer id out of range");
  return v;
}

void insert_random_layer(NetworkDescriptor& d, std::size_t pos, const SearchConstraints& c, Rng& rng) {
  const auto width = uniform_int<std::size_t>(rng, 1, c.max_width);
  const auto act = kActivations[uniform_int<std::size_t>(rng, 0, kActivations.size() - 1)];
  const auto init = kInitializers[uniform_int<std::size_t>(rng, 0, kInitializers.size() - 1)];
  const bool drop = coin_flip(rng);
  const bool bn = coin_flip(rng);
  d.hidden_widths.insert(d.hidden_widths.begin() + pos, width);
  d.activations.insert(d.activations.begin() + pos, act);
  d.initializers.insert(d.initializers.begin() + pos, init);
  d.dropout.insert(d.dropout.begin() + pos, drop);
  d.batch_norm.insert(d.batch_norm.begin() + pos, bn);
}

NetworkDescriptor random_descriptor(const SearchConstraints& c, Rng& rng) {
  NetworkDescriptor d;
  const auto depth = uniform_int<std::size_t>(rng, 1, c.max_depth);
  for (std::size_t j = 0; j < depth; ++j) insert_random_layer(d, j, c, rng);
  return d;
}

std::string to_text(const NetworkDescriptor& d) {
  std::ostringstream os;
  os << "widths=" << join(d.hidden_widths, [](std::size_t w) { return std::to_string(w); })
     << ";act=" << join(d.activations, [](Activation a) { return std::string(to_string(a)); })
     << ";init=" << join(d.initializers, [](Initializer i) { return std::string(to_string(i)); })
     << ";drop=" << join(d.dropout, [](bool b) { return std::string(b ? "1" : "0"); })
     << ";bn=" << join(d.batch_norm, [](bool b) { return std::string(b ? "1" : "0"); });
  return os.str();
}

NetworkDescriptor from_text(std::string_view text) {
  NetworkDescriptor d;
  bool seen[5] = {};
  auto parse_flag = [](std::string_view s) {
    if (s == "1") return true;
    if (s == "0") return false;
    throw ConstructionError("flag must be 0 or 1, got '" + std::string(s) + "'");
  };
  for (std::string_view field : split(text, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos)
      throw ConstructionError("descriptor field without '=': '" + std::string(field) + "'");
    const std::string_view key = field.substr(0, eq);
    const std::string_view value = field.substr(eq + 1);
    const auto items = value.empty() ? std::vector<std::string_view>{} : split(value, ',');
    if (key == "widths") {
      seen[0] = true;
      for (auto s : items) {
        std::size_t w = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), w);
        if (ec != std::errc{} || p != s.data() + s.size())
          throw ConstructionError("bad width '" + std::string(s) + "'");
        d.hidden_widths.push_back(w);
      }
    } else if (key == "act") {
      seen[1] = true;
      for (auto s : items) d.activations.push_back(parse_activation(s));
    } else if (key == "init") {
      seen[2] = true;
      for (auto s : items) d.initializers.push_back(parse_initializer(s));
    } else if (key == "drop") {
      seen[3] = true;
      for (auto s : items) d.dropout.push_back(parse_flag(s));
    } else if (key == "bn") {
      seen[4] = true;
      for (auto s : items) d.batch_norm.push_back(parse_flag(s));
    } else {
      throw ConstructionError("unknown descriptor field '" + std::string(key) + "'");
    }
  }
  for (bool s : seen)
    if (!s) throw ConstructionError("descriptor text is missing a field: '" + std::string(text) + "'");
  return d;
}

}  // namespace ncevo
