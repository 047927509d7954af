#include "ncevo/data.hpp"

#include <curl/curl.h>
#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <numeric>
#include <set>

#include "ncevo/errors.hpp"
#include "ncevo/random.hpp"

namespace ncevo {

namespace {

std::string read_maybe_gzipped(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("dataset file not found: " + path.string());
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open " + path.string());
  std::string content;
  char buf[1 << 15];
  int n = 0;
  while ((n = gzread(f, buf, sizeof buf)) > 0) content.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw DataError("read error in " + path.string());
  return content;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_cell(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Splits `total` into parts proportional to `weights` (largest remainder).
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> parts(weights.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t used = 0;
  for (std::size_t p = 0; p < weights.size(); ++p) {
    const double exact = static_cast<double>(total) * weights[p] / sum;
    parts[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += parts[p];
    rema.emplace_back(exact - static_cast<double>(parts[p]), p);
  }
  std::stable_sort(rema.begin(), rema.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t i = 0; used < total; ++i, ++used) ++parts[rema[i % rema.size()].second];
  return parts;
}

LabeledSet take(const Matrix& features, std::span<const int> labels, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  LabeledSet out;
  out.features = features.select_rows(idx);
  for (std::size_t i : idx) out.labels.push_back(labels[i]);
  return out;
}

void transform_columns(Matrix& m, std::span<const double> mean, std::span<const double> scale) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < m.cols(); ++c) m(i, c) = (m(i, c) - mean[c]) / scale[c];
}

}  // namespace

std::array<std::size_t, 2> class_counts(std::span<const int> labels) {
  std::array<std::size_t, 2> counts{};
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Dataset load_pmlb(const std::filesystem::path& path) {
  const std::string content = read_maybe_gzipped(path);
  std::string_view rest(content);
  auto next_line = [&rest]() -> std::optional<std::string_view> {
    while (!rest.empty()) {
      const std::size_t nl = rest.find('\n');
      std::string_view line = rest.substr(0, nl);
      rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
      if (!trim(line).empty()) return line;
    }
    return std::nullopt;
  };

  const auto header_line = next_line();
  if (!header_line) throw DataError(path.string() + ": empty file");
  const auto header = split_fields(*header_line);
  std::optional<std::size_t> target;
  Dataset ds;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == "target")
      target = i;
    else
      ds.feature_names.emplace_back(trim(header[i]));
  }
  if (!target) throw DataError(path.string() + ": missing target column");

  std::string name = path.filename().string();
  for (const char* ext : {".gz", ".tsv"})
    if (name.size() > std::strlen(ext) && name.ends_with(ext)) name.resize(name.size() - std::strlen(ext));
  ds.name = name;

  std::vector<double> raw_targets;
  std::vector<double> row;
  ds.features = Matrix(0, header.size() - 1);
  while (auto line = next_line()) {
    const auto fields = split_fields(*line);
    if (fields.size() != header.size()) {
      ++ds.dropped_rows;
      continue;
    }
    row.clear();
    std::optional<double> y;
    bool ok = true;
    for (std::size_t i = 0; i < fields.size() && ok; ++i) {
      const auto v = parse_cell(fields[i]);
      if (!v) ok = false;
      else if (i == *target) y = v;
      else row.push_back(*v);
    }
    if (!ok) {
      ++ds.dropped_rows;
      continue;
    }
    ds.features.append_row(row);
    raw_targets.push_back(*y);
  }

  const std::set<double> distinct(raw_targets.begin(), raw_targets.end());
  if (distinct.size() != 2)
    throw DataError(path.string() + ": target is not binary (" + std::to_string(distinct.size()) +
                    " distinct values)");
  ds.label_values = {*distinct.begin(), *distinct.rbegin()};
  ds.labels.reserve(raw_targets.size());
  for (double t : raw_targets) ds.labels.push_back(t == ds.label_values[1] ? 1 : 0);
  return ds;
}

Partitions split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  const std::array<double, 3> weights = {ratios.train, ratios.val, ratios.test};
  for (double w : weights)
    if (!(w > 0)) throw ConfigError("split ratios must be positive");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");

  Rng rng(seed);
  std::array<std::vector<std::size_t>, 3> parts;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.labels.size(); ++i)
      if (dataset.labels[i] == cls) idx.push_back(i);
    if (idx.size() < parts.size())
      throw DataError("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                      " instances, fewer than the 3 partitions");
    std::shuffle(idx.begin(), idx.end(), rng);
    auto counts = apportion(idx.size(), weights);
    for (auto& c : counts) {
      if (c > 0) continue;
      auto largest = std::max_element(counts.begin(), counts.end());
      --*largest;
      c = 1;
    }
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      parts[p].insert(parts[p].end(), idx.begin() + static_cast<long>(pos),
                      idx.begin() + static_cast<long>(pos + counts[p]));
      pos += counts[p];
    }
  }
  return Partitions{take(dataset.features, dataset.labels, parts[0]),
                    take(dataset.features, dataset.labels, parts[1]),
                    take(dataset.features, dataset.labels, parts[2])};
}

std::pair<LabeledSet, Matrix> mask_labels(const LabeledSet& pool, double q, std::uint64_t seed) {
  if (!(q >= 0.0 && q < 1.0)) throw ConfigError("q must lie in [0, 1)");
  const std::size_t n = pool.size();
  const auto total_unlabeled = static_cast<std::size_t>(std::llround(q * static_cast<double>(n)));
  const auto counts = class_counts(pool.labels);
  const std::array<double, 2> weights = {static_cast<double>(counts[0]), static_cast<double>(counts[1])};
  const auto per_class = n ? apportion(total_unlabeled, weights) : std::vector<std::size_t>{0, 0};

  Rng rng(seed);
  std::vector<std::size_t> labeled, unlabeled;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (pool.labels[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t u = std::min(per_class[static_cast<std::size_t>(cls)], idx.size());
    unlabeled.insert(unlabeled.end(), idx.begin(), idx.begin() + static_cast<long>(u));
    labeled.insert(labeled.end(), idx.begin() + static_cast<long>(u), idx.end());
  }
  if (labeled.empty()) throw DataError("masking left no labeled instances");
  LabeledSet l = take(pool.features, pool.labels, labeled);
  std::sort(unlabeled.begin(), unlabeled.end());
  Matrix u = pool.features.select_rows(unlabeled);
  return {std::move(l), std::move(u)};
}

DatasetSplit::DatasetSplit(LabeledSet train_labeled_, Matrix train_unlabeled_, LabeledSet val_, LabeledSet test,
                           double q_)
    : train_labeled(std::move(train_labeled_)),
      train_unlabeled(std::move(train_unlabeled_)),
      val(std::move(val_)),
      q(q_),
      test_(std::move(test)) {}

LabeledSet DatasetSplit::labeled_union() const {
  LabeledSet out = train_labeled;
  for (std::size_t i = 0; i < val.size(); ++i) {
    out.features.append_row(val.features.row(i));
    out.labels.push_back(val.labels[i]);
  }
  return out;
}

DatasetSplit standardize(DatasetSplit s) {
  if (s.train_labeled.size() == 0) throw DataError("cannot standardize without labeled training data");
  const std::size_t cols = s.train_labeled.features.cols();
  const std::array<const Matrix*, 2> fit = {&s.train_labeled.features, &s.train_unlabeled};
  std::vector<double> mean(cols, 0.0), scale(cols, 0.0);
  std::size_t count = 0;
  for (const Matrix* m : fit) {
    if (m->empty()) continue;
    for (std::size_t i = 0; i < m->rows(); ++i)
      for (std::size_t c = 0; c < cols; ++c) mean[c] += (*m)(i, c);
    count += m->rows();
  }
  for (double& v : mean) v /= static_cast<double>(count);
  for (const Matrix* m : fit) {
    if (m->empty()) continue;
    for (std::size_t i = 0; i < m->rows(); ++i)
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = (*m)(i, c) - mean[c];
        scale[c] += d * d;
      }
  }
  for (double& v : scale) {
    v = std::sqrt(v / static_cast<double>(count));
    if (!(v > 0)) v = 1.0;
  }
  transform_columns(s.train_labeled.features, mean, scale);
  if (!s.train_unlabeled.empty()) transform_columns(s.train_unlabeled, mean, scale);
  transform_columns(s.val.features, mean, scale);
  transform_columns(s.test_.features, mean, scale);
  return s;
}

DatasetSplit make_split(const Dataset& dataset, double q, const SplitRatios& ratios, std::uint64_t split_seed,
                        std::uint64_t mask_seed) {
  Partitions parts = split(dataset, ratios, split_seed);
  auto [labeled, unlabeled] = mask_labels(parts.train, q, mask_seed);
  return standardize(
      DatasetSplit(std::move(labeled), std::move(unlabeled), std::move(parts.val), std::move(parts.test), q));
}

std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("NCEVO_CACHE_DIR"); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return std::filesystem::path(xdg) / "ncevo";
  if (const char* home = std::getenv("HOME"); home && *home)
    return std::filesystem::path(home) / ".cache" / "ncevo";
  return std::filesystem::temp_directory_path() / "ncevo";
}

std::optional<std::filesystem::path> find_dataset(const std::string& name,
                                                  std::span<const std::filesystem::path> dirs) {
  for (const auto& dir : dirs) {
    for (const auto& candidate : {dir / name / (name + ".tsv.gz"), dir / (name + ".tsv.gz"),
                                  dir / name / (name + ".tsv"), dir / (name + ".tsv")}) {
      if (std::filesystem::is_regular_file(candidate)) return candidate;
    }
  }
  return std::nullopt;
}

std::string pmlb_url(const std::string& name) {
  return "https://github.com/EpistasisLab/pmlb/raw/master/datasets/" + name + "/" + name + ".tsv.gz";
}

std::filesystem::path fetch_pmlb(const std::string& name, const std::filesystem::path& cache_dir) {
  if (name.empty() || name.find_first_of("/\\") != std::string::npos || name.starts_with("."))
    throw DataError("invalid dataset name '" + name + "'");
  const auto dir = cache_dir / name;
  const auto target = dir / (name + ".tsv.gz");
  if (std::filesystem::is_regular_file(target)) return target;
  std::filesystem::create_directories(dir);
  const auto partial = dir / (name + ".tsv.gz.part");

  std::FILE* out = std::fopen(partial.c_str(), "wb");
  if (!out) throw DataError("cannot write " + partial.string());
  CURL* curl = curl_easy_init();
  if (!curl) {
    std::fclose(out);
    throw DataError("curl initialisation failed");
  }
  const std::string url = pmlb_url(name);
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 20L);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, out);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  std::fclose(out);
  if (rc != CURLE_OK) {
    std::filesystem::remove(partial);
    throw DataError("download of " + url + " failed: " + curl_easy_strerror(rc));
  }
  std::filesystem::rename(partial, target);
  return target;
}

}  // namespace ncevo
