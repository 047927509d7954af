#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ncevo/matrix.hpp"
#include "ncevo/nn.hpp"

namespace ncevo {

/// Per-neuron activation range [lower, upper] observed on a reference set.
struct ActivationProfile {
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t source_size = 0;

  std::size_t neuron_count() const noexcept { return lower.size(); }
};

enum class CoverageMetric : std::uint8_t { nc, tknc, kmn, nbc, snac };

std::string_view to_string(CoverageMetric m);
CoverageMetric parse_coverage_metric(std::string_view name);

struct CoverageConfig {
  CoverageMetric metric = CoverageMetric::nc;
  double threshold = 0.0;    // NC: activated when output > threshold
  std::size_t top_k = 1;     // TKNC
  std::size_t sections = 100;  // KMN

  void check() const;
};

ActivationProfile profile_bounds(const ActivationTrace& reference);
ActivationProfile profile_bounds(const Network& net, const Matrix& reference);

/// Fraction of neurons whose output exceeds `threshold` on some instance.
double nc(const ActivationTrace& trace, double threshold);

/// Fraction of neurons that rank among the `k` largest outputs of their layer
/// for some instance. Ties go to the lower neuron index.
double tknc(const ActivationTrace& trace, std::size_t k);

/// Index of the section of [lower, upper] split into `sections` equal parts that
/// contains `value`, or -1 when `value` lies outside the range. Section s covers
/// [lower + s*delta, lower + (s+1)*delta); the last one is closed at `upper`.
/// A degenerate range maps `value == lower` to section 0.
long section_index(double value, double lower, double upper, std::size_t sections) noexcept;

/// Sum over neurons of hit sections, divided by sections * N.
double kmn(const ActivationTrace& trace, const ActivationProfile& profile, std::size_t sections);

/// (|below lower| + |above upper|) / 2N, strict inequalities.
double nbc(const ActivationTrace& trace, const ActivationProfile& profile);

/// |above upper| / N, strict.
double snac(const ActivationTrace& trace, const ActivationProfile& profile);

/// Metric dispatch on an existing trace.
double coverage(const CoverageConfig& config, const ActivationTrace& trace, const ActivationProfile& profile);

/// Traces `inputs` in inference mode and evaluates the configured metric.
double coverage(const CoverageConfig& config, const Network& net, const ActivationProfile& profile,
                const Matrix& inputs);

}  // namespace ncevo
