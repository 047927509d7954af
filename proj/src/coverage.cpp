#include "ncevo/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ncevo/errors.hpp"

namespace ncevo {

namespace {

void require_nonempty(const ActivationTrace& trace) {
  if (trace.instance_count() == 0 || trace.neuron_count() == 0) throw DataError("coverage of an empty trace");
}

void require_matching(const ActivationTrace& trace, const ActivationProfile& profile) {
  require_nonempty(trace);
  if (profile.lower.size() != trace.neuron_count() || profile.upper.size() != trace.neuron_count())
    throw ShapeError("profile covers " + std::to_string(profile.lower.size()) + " neurons, trace has " +
                     std::to_string(trace.neuron_count()));
}

double ratio(std::size_t count, std::size_t total) {
  return static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

std::string_view to_string(CoverageMetric m) {
  switch (m) {
    case CoverageMetric::nc: return "NC";
    case CoverageMetric::tknc: return "TKNC";
    case CoverageMetric::kmn: return "KMN";
    case CoverageMetric::nbc: return "NBC";
    case CoverageMetric::snac: return "SNAC";
  }
  return "?";
}

CoverageMetric parse_coverage_metric(std::string_view name) {
  for (auto m : {CoverageMetric::nc, CoverageMetric::tknc, CoverageMetric::kmn, CoverageMetric::nbc,
                 CoverageMetric::snac})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown coverage metric '" + std::string(name) + "'");
}

void CoverageConfig::check() const {
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (sections < 1) throw ConfigError("sections must be >= 1");
  if (!std::isfinite(threshold)) throw ConfigError("threshold must be finite");
}

ActivationProfile profile_bounds(const ActivationTrace& reference) {
  if (reference.instance_count() == 0) throw DataError("cannot profile bounds on an empty reference set");
  const std::size_t n = reference.neuron_count();
  ActivationProfile p;
  p.lower.assign(reference.values.row(0).begin(), reference.values.row(0).end());
  p.upper = p.lower;
  for (std::size_t i = 1; i < reference.instance_count(); ++i) {
    const auto r = reference.values.row(i);
    for (std::size_t c = 0; c < n; ++c) {
      p.lower[c] = std::min(p.lower[c], r[c]);
      p.upper[c] = std::max(p.upper[c], r[c]);
    }
  }
  p.source_size = reference.instance_count();
  return p;
}

ActivationProfile profile_bounds(const Network& net, const Matrix& reference) {
  if (reference.rows() == 0) throw DataError("cannot profile bounds on an empty reference set");
  return profile_bounds(*forward(net, reference, true).trace);
}

double nc(const ActivationTrace& trace, double threshold) {
  require_nonempty(trace);
  const std::size_t n = trace.neuron_count();
  std::vector<bool> activated(n, false);
  for (std::size_t i = 0; i < trace.instance_count(); ++i) {
    const auto r = trace.values.row(i);
    for (std::size_t c = 0; c < n; ++c)
      if (r[c] > threshold) activated[c] = true;
  }
  return ratio(std::count(activated.begin(), activated.end(), true), n);
}

double tknc(const ActivationTrace& trace, std::size_t k) {
  require_nonempty(trace);
  if (k < 1) throw ConfigError("top_k must be >= 1");
  const std::size_t n = trace.neuron_count();
  std::vector<bool> covered(n, false);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < trace.instance_count(); ++i) {
    const auto r = trace.values.row(i);
    for (std::size_t l = 0; l < trace.layer_widths.size(); ++l) {
      const std::size_t offset = trace.layer_offsets[l], width = trace.layer_widths[l];
      const std::size_t take = std::min(k, width);
      order.resize(width);
      std::iota(order.begin(), order.end(), offset);
      std::partial_sort(order.begin(), order.begin() + static_cast<long>(take), order.end(),
                        [&r](std::size_t a, std::size_t b) { return r[a] > r[b] || (r[a] == r[b] && a < b); });
      for (std::size_t t = 0; t < take; ++t) covered[order[t]] = true;
    }
  }
  return ratio(std::count(covered.begin(), covered.end(), true), n);
}

long section_index(double value, double lower, double upper, std::size_t sections) noexcept {
  if (!(value >= lower && value <= upper)) return -1;
  if (lower == upper) return 0;
  const double delta = (upper - lower) / static_cast<double>(sections);
  const long last = static_cast<long>(sections) - 1;
  long s = std::clamp(static_cast<long>(std::floor((value - lower) / delta)), 0L, last);
  // Align with the boundaries lower + s*delta exactly as they are defined.
  while (s > 0 && value < lower + static_cast<double>(s) * delta) --s;
  while (s < last && value >= lower + static_cast<double>(s + 1) * delta) ++s;
  return s;
}

double kmn(const ActivationTrace& trace, const ActivationProfile& profile, std::size_t sections) {
  require_matching(trace, profile);
  if (sections < 1) throw ConfigError("sections must be >= 1");
  const std::size_t n = trace.neuron_count();
  std::size_t hits = 0;
  std::vector<bool> seen(sections);
  for (std::size_t c = 0; c < n; ++c) {
    std::fill(seen.begin(), seen.end(), false);
    for (std::size_t i = 0; i < trace.instance_count(); ++i) {
      const long s = section_index(trace.values(i, c), profile.lower[c], profile.upper[c], sections);
      if (s >= 0 && !seen[static_cast<std::size_t>(s)]) {
        seen[static_cast<std::size_t>(s)] = true;
        ++hits;
      }
    }
  }
  return ratio(hits, sections * n);
}

namespace {

std::pair<std::size_t, std::size_t> corner_counts(const ActivationTrace& trace, const ActivationProfile& profile) {
  const std::size_t n = trace.neuron_count();
  std::size_t lower = 0, upper = 0;
  for (std::size_t c = 0; c < n; ++c) {
    bool below = false, above = false;
    for (std::size_t i = 0; i < trace.instance_count(); ++i) {
      const double v = trace.values(i, c);
      below = below || v < profile.lower[c];
      above = above || v > profile.upper[c];
    }
    lower += below;
    upper += above;
  }
  return {lower, upper};
}

}  // namespace

double nbc(const ActivationTrace& trace, const ActivationProfile& profile) {
  require_matching(trace, profile);
  const auto [lcn, ucn] = corner_counts(trace, profile);
  return ratio(lcn + ucn, 2 * trace.neuron_count());
}

double snac(const ActivationTrace& trace, const ActivationProfile& profile) {
  require_matching(trace, profile);
  return ratio(corner_counts(trace, profile).second, trace.neuron_count());
}

double coverage(const CoverageConfig& config, const ActivationTrace& trace, const ActivationProfile& profile) {
  config.check();
  switch (config.metric) {
    case CoverageMetric::nc: return nc(trace, config.threshold);
    case CoverageMetric::tknc: return tknc(trace, config.top_k);
    case CoverageMetric::kmn: return kmn(trace, profile, config.sections);
    case CoverageMetric::nbc: return nbc(trace, profile);
    case CoverageMetric::snac: return snac(trace, profile);
  }
  throw ConfigError("unknown coverage metric");
}

double coverage(const CoverageConfig& config, const Network& net, const ActivationProfile& profile,
                const Matrix& inputs) {
  if (inputs.rows() == 0) throw DataError("coverage inputs are empty");
  const auto trace = forward(net, inputs, true).trace;
  return coverage(config, *trace, profile);
}

}  // namespace ncevo
