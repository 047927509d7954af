#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>
#include <zlib.h>

#include "ncevo/data.hpp"
#include "ncevo/errors.hpp"

using namespace ncevo;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / ("ncevo_test_data_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const auto path = temp_dir() / name;
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

fs::path write_gz(const std::string& name, const std::string& text) {
  const auto path = temp_dir() / name;
  gzFile f = gzopen(path.string().c_str(), "wb");
  gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
  gzclose(f);
  return path;
}

Dataset synthetic(std::size_t n0, std::size_t n1, std::size_t cols = 3) {
  Dataset d;
  d.name = "synthetic";
  d.features = Matrix(0, cols);
  std::vector<double> row(cols);
  for (std::size_t i = 0; i < n0 + n1; ++i) {
    for (std::size_t c = 0; c < cols; ++c) row[c] = static_cast<double>(i * (c + 1)) + (c == 2 ? 5.0 : 0.0);
    if (cols > 1) row[cols - 1] = 7.0;  // constant column
    d.features.append_row(row);
    d.labels.push_back(i < n0 ? 0 : 1);
  }
  return d;
}

std::optional<fs::path> locate(const std::string& name) {
  const std::vector<fs::path> dirs = {NCEVO_TEST_DATA_DIR, default_cache_dir()};
  return find_dataset(name, dirs);
}

}  // namespace

TEST_CASE("PMLB tables load with the smaller target mapped to 0") {
  const auto path = write_file("small.tsv", "a\tb\ttarget\n1\t2\t5\n3\t4\t2\n5\t6\t5\n");
  const auto d = load_pmlb(path);
  CHECK(d.features.rows() == 3);
  CHECK(d.features.cols() == 2);
  CHECK(d.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(d.labels == std::vector<int>{1, 0, 1});
  CHECK(d.label_values[0] == 2.0);
  CHECK(d.label_values[1] == 5.0);
  CHECK(d.features(1, 1) == 4.0);
}

TEST_CASE("the target column may appear anywhere and files may be gzipped") {
  const auto path = write_gz("front.tsv.gz", "target\tx\n0\t1.5\n1\t-2.5\n");
  const auto d = load_pmlb(path);
  CHECK(d.features.cols() == 1);
  CHECK(d.features(1, 0) == -2.5);
  CHECK(d.labels == std::vector<int>{0, 1});
}

TEST_CASE("rows with missing or unparseable cells are dropped and counted") {
  const auto path = write_file("gaps.tsv", "x\ty\ttarget\n1\t?\t0\n2\t3\t1\n\t4\t0\n5\tabc\t1\n6\t7\t0\n8\t9\n");
  const auto d = load_pmlb(path);
  CHECK(d.features.rows() == 2);
  CHECK(d.dropped_rows == 4);
}

TEST_CASE("malformed tables are rejected") {
  CHECK_THROWS_AS(load_pmlb(write_file("three.tsv", "x\ttarget\n1\t0\n2\t1\n3\t2\n")), DataError);
  try {
    load_pmlb(write_file("three2.tsv", "x\ttarget\n1\t0\n2\t1\n3\t2\n"));
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("not binary") != std::string::npos);
  }
  CHECK_THROWS_AS(load_pmlb(write_file("one.tsv", "x\ttarget\n1\t0\n2\t0\n")), DataError);
  CHECK_THROWS_AS(load_pmlb(write_file("notarget.tsv", "x\ty\n1\t0\n")), DataError);
  CHECK_THROWS_AS(load_pmlb(temp_dir() / "missing.tsv"), DataError);
}

TEST_CASE("loading is idempotent") {
  const auto path = write_gz("idem.tsv.gz", "a\tb\ttarget\n0.1\t2\t0\n3\t4e-3\t1\n");
  const auto a = load_pmlb(path), b = load_pmlb(path);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
}

TEST_CASE("the bundled breast_w table") {
  const auto path = locate("breast_w");
  REQUIRE(path);
  const auto d = load_pmlb(*path);
  CHECK(d.features.cols() == 9);
  CHECK(d.features.rows() + d.dropped_rows == 699);
  CHECK(d.dropped_rows == 16);
  const auto counts = class_counts(d.labels);
  CHECK(counts[0] == 444);
  CHECK(counts[1] == 239);
}

TEST_CASE("table sizes of PMLB datasets available locally") {
  struct Expected {
    const char* name;
    std::size_t rows, cols;
  };
  for (const auto& e : {Expected{"australian", 690, 14}, Expected{"diabetes", 768, 8}}) {
    const auto path = locate(e.name);
    if (!path) {
      MESSAGE(e.name << " not available locally; size check skipped");
      continue;
    }
    const auto d = load_pmlb(*path);
    CHECK(d.features.rows() == e.rows);
    CHECK(d.features.cols() == e.cols);
  }
}

TEST_CASE("stratified split of a balanced hundred") {
  const auto parts = split(synthetic(50, 50), {}, 3);
  CHECK(parts.train.size() == 60);
  CHECK(parts.val.size() == 20);
  CHECK(parts.test.size() == 20);
  CHECK(class_counts(parts.train.labels) == std::array<std::size_t, 2>{30, 30});
  CHECK(class_counts(parts.val.labels) == std::array<std::size_t, 2>{10, 10});
  CHECK(class_counts(parts.test.labels) == std::array<std::size_t, 2>{10, 10});
}

TEST_CASE("split partitions are disjoint, exhaustive, stratified and deterministic") {
  for (auto [n0, n1] : {std::pair<std::size_t, std::size_t>{37, 11}, {444, 239}, {3, 50}, {200, 201}}) {
    const auto d = synthetic(n0, n1, 2);
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      const auto parts = split(d, {}, seed);
      const auto again = split(d, {}, seed);
      CHECK(parts.train.features == again.train.features);
      CHECK(parts.test.labels == again.test.labels);
      // Column 0 holds the original row index.
      std::multiset<double> seen;
      for (const auto* p : {&parts.train, &parts.val, &parts.test})
        for (std::size_t i = 0; i < p->size(); ++i) seen.insert(p->features(i, 0));
      CHECK(seen.size() == n0 + n1);
      CHECK(std::set<double>(seen.begin(), seen.end()).size() == n0 + n1);
      const double ratios[] = {0.6, 0.2, 0.2};
      int k = 0;
      for (const auto* p : {&parts.train, &parts.val, &parts.test}) {
        const auto c = class_counts(p->labels);
        CHECK(c[0] >= 1);
        CHECK(c[1] >= 1);
        CHECK(std::abs(static_cast<double>(c[0]) - ratios[k] * static_cast<double>(n0)) <= 1.0 + (n0 < 5));
        CHECK(std::abs(static_cast<double>(c[1]) - ratios[k] * static_cast<double>(n1)) <= 1.0 + (n1 < 5));
        ++k;
      }
    }
  }
  CHECK_THROWS_AS(split(synthetic(2, 10), {}, 1), DataError);
  CHECK_THROWS_AS(split(synthetic(20, 10), {0.5, 0.5, 0.5}, 1), ConfigError);
}

TEST_CASE("class proportions are preserved on the cleve dataset") {
  const auto path = locate("cleve");
  if (!path) {
    MESSAGE("cleve not available locally; check skipped");
    return;
  }
  const auto d = load_pmlb(*path);
  const auto total = class_counts(d.labels);
  const auto parts = split(d, {}, 5);
  const double ratios[] = {0.6, 0.2, 0.2};
  int k = 0;
  for (const auto* p : {&parts.train, &parts.val, &parts.test}) {
    const auto c = class_counts(p->labels);
    for (int cls : {0, 1})
      CHECK(std::abs(static_cast<double>(c[cls]) - ratios[k] * static_cast<double>(total[cls])) <= 1.0);
    ++k;
  }
}

TEST_CASE("masking hides round(q * n) labels, stratified") {
  const LabeledSet pool = split(synthetic(50, 50), {0.6, 0.2, 0.2}, 1).train;  // 60 rows
  auto [l0, u0] = mask_labels(pool, 0.0, 1);
  CHECK(u0.rows() == 0);
  CHECK(l0.size() == 60);

  LabeledSet hundred;
  const auto d = synthetic(40, 60);
  hundred.features = d.features;
  hundred.labels = d.labels;
  auto [l8, u8] = mask_labels(hundred, 0.8, 1);
  CHECK(l8.size() == 20);
  CHECK(u8.rows() == 80);
  const auto c = class_counts(l8.labels);
  CHECK(std::abs(static_cast<double>(c[0]) - 8.0) <= 1.0);
  CHECK(std::abs(static_cast<double>(c[1]) - 12.0) <= 1.0);

  for (double q : {0.0, 0.2, 0.4, 0.6, 0.8}) {
    for (std::size_t n : {37u, 60u, 409u}) {
      LabeledSet p;
      const auto s = synthetic(n / 3, n - n / 3);
      p.features = s.features;
      p.labels = s.labels;
      auto [l, u] = mask_labels(p, q, 7);
      CHECK(u.rows() == static_cast<std::size_t>(std::llround(q * static_cast<double>(n))));
      CHECK(l.size() + u.rows() == n);
      const auto pc = class_counts(p.labels), lc = class_counts(l.labels);
      for (int cls : {0, 1}) {
        const double expect = (1.0 - q) * static_cast<double>(pc[cls]);
        CHECK(std::abs(static_cast<double>(lc[cls]) - expect) <= 1.0);
      }
      auto [l2, u2] = mask_labels(p, q, 7);
      CHECK(l2.features == l.features);
      CHECK(u2 == u);
    }
  }
  CHECK_THROWS_AS(mask_labels(pool, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(mask_labels(pool, -0.1, 1), ConfigError);
}

TEST_CASE("standardisation is fitted on all training features") {
  const auto s = make_split(synthetic(50, 50), 0.4, {}, 1, 2);
  const std::size_t cols = s.train_labeled.features.cols();
  for (std::size_t c = 0; c < cols; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const Matrix* m : {&s.train_labeled.features, &s.train_unlabeled})
      for (std::size_t i = 0; i < m->rows(); ++i) {
        sum += (*m)(i, c);
        sq += (*m)(i, c) * (*m)(i, c);
        ++n;
      }
    CHECK(std::abs(sum / static_cast<double>(n)) < 1e-10);
    if (c + 1 < cols) CHECK(sq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(1e-10));
  }
  // The constant column becomes all zeros everywhere.
  for (std::size_t i = 0; i < s.val.size(); ++i) CHECK(s.val.features(i, cols - 1) == 0.0);
  double val_mean = 0.0;
  for (std::size_t i = 0; i < s.val.size(); ++i) val_mean += s.val.features(i, 0);
  CHECK(std::abs(val_mean / static_cast<double>(s.val.size())) > 1e-6);
}

TEST_CASE("the split keeps validation and test fully labeled and counts test reads") {
  const auto s = make_split(synthetic(50, 50), 0.6, {}, 1, 2);
  CHECK(s.train_labeled.size() + s.train_unlabeled.rows() == 60);
  CHECK(s.train_unlabeled.rows() == 36);
  CHECK(s.val.size() == 20);
  CHECK(s.test_reads() == 0);
  CHECK(s.test().size() == 20);
  CHECK(s.test_reads() == 1);
  CHECK(s.labeled_union().size() == s.train_labeled.size() + s.val.size());
}

TEST_CASE("dataset lookup and cache location") {
  const auto dir = temp_dir() / "lookup";
  fs::create_directories(dir / "nested");
  std::ofstream(dir / "nested" / "nested.tsv") << "x\ttarget\n1\t0\n2\t1\n";
  std::ofstream(dir / "flat.tsv.gz") << "";
  const std::vector<fs::path> dirs = {temp_dir() / "absent", dir};
  CHECK(find_dataset("nested", dirs) == dir / "nested" / "nested.tsv");
  CHECK(find_dataset("flat", dirs) == dir / "flat.tsv.gz");
  CHECK(!find_dataset("none", dirs));

  ::setenv("NCEVO_CACHE_DIR", "/tmp/ncevo-cache-test", 1);
  CHECK(default_cache_dir() == fs::path("/tmp/ncevo-cache-test"));
  ::unsetenv("NCEVO_CACHE_DIR");
  ::setenv("XDG_CACHE_HOME", "/tmp/xdg", 1);
  CHECK(default_cache_dir() == fs::path("/tmp/xdg/ncevo"));
  ::unsetenv("XDG_CACHE_HOME");

  CHECK(pmlb_url("diabetes") == "https://github.com/EpistasisLab/pmlb/raw/master/datasets/diabetes/diabetes.tsv.gz");
  CHECK_THROWS_AS(fetch_pmlb("../etc", temp_dir()), DataError);
}
