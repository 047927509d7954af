#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "ncevo/errors.hpp"
#include "ncevo/experiment.hpp"
#include "support/blobs.hpp"

using namespace ncevo;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ncevo_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_tsv(const Dataset& d, const fs::path& path) {
  std::ofstream os(path);
  for (std::size_t c = 0; c < d.features.cols(); ++c) os << "x" << c << '\t';
  os << "target\n";
  os.precision(17);
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    for (std::size_t c = 0; c < d.features.cols(); ++c) os << d.features(i, c) << '\t';
    os << d.labels[i] << '\n';
  }
}

// A small grid over a separable problem written to disk as "blobs".
ExperimentConfig small_config(const fs::path& root) {
  write_tsv(testdata::blobs(40, 2, 4.0, 0.5, 1), root / "blobs.tsv");
  ExperimentConfig cfg;
  cfg.datasets = {"blobs"};
  cfg.q_grid = {0.0};
  cfg.strategies = {FitnessSpec::parse("NC")};
  cfg.repetitions = 2;
  cfg.seed = 5;
  cfg.ga.population_size = 4;
  cfg.ga.generations = 2;
  cfg.ga.constraints = {3, 4};
  cfg.train.epochs = 20;
  cfg.output_dir = root / "out";
  cfg.data_dirs = {root};
  return cfg;
}

std::vector<RunRecord> without_wall_time(std::vector<RunRecord> records) {
  for (auto& r : records) r.wall_time_ms = 0.0;
  return records;
}

std::vector<RunRecord> read_file(const fs::path& path) {
  std::ifstream is(path);
  return read_records(is);
}

RunRecord final_row(std::string dataset, double q, std::string strategy, std::size_t rep, double test) {
  RunRecord r;
  r.dataset = std::move(dataset);
  r.q = q;
  r.strategy = std::move(strategy);
  r.repetition = rep;
  r.in_final = true;
  r.test_balanced_accuracy = test;
  return r;
}

}  // namespace

TEST_CASE("budget run writes one directory per cell and one row per evaluation") {
  const auto root = scratch_dir("budget");
  const auto cfg = small_config(root);
  const auto outcome = run_experiment(cfg);
  CHECK(outcome.failed_cells == 0);
  REQUIRE(outcome.cells.size() == 2);
  for (std::size_t rep = 0; rep < 2; ++rep) {
    const auto dir = cfg.output_dir / "runs" / "blobs" / ("q0_SUPERVISED_rep" + std::to_string(rep));
    CHECK(fs::is_regular_file(dir / "records.csv"));
    CHECK(fs::is_regular_file(dir / "resolved_config.txt"));
    CHECK(fs::is_regular_file(dir / "log.txt"));
    CHECK(read_file(dir / "records.csv").size() == 12);
  }
  const auto records = read_file(cfg.output_dir / "records.csv");
  CHECK(records.size() == 24);
  std::size_t finals = 0;
  for (const auto& r : records) finals += r.in_final;
  CHECK(finals == 8);
  CHECK(fs::is_regular_file(cfg.output_dir / "summary.csv"));
  CHECK(fs::is_regular_file(cfg.output_dir / "plots" / "accuracy_vs_q.svg"));
  CHECK(fs::is_regular_file(cfg.output_dir / "plots" / "fitness_vs_evaluation.svg"));
  CHECK(parse_config(resolved_config_text(cfg)).ga.population_size == 4);

  // Rerunning reproduces every record apart from timings.
  auto again = cfg;
  again.output_dir = root / "again";
  run_experiment(again);
  CHECK(without_wall_time(read_file(again.output_dir / "records.csv")) == without_wall_time(records));
  fs::remove_all(root);
}

TEST_CASE("a coverage cell yields one summary row") {
  const auto root = scratch_dir("cell");
  auto cfg = small_config(root);
  cfg.q_grid = {0.2};
  cfg.repetitions = 1;
  const auto outcome = run_experiment(cfg);
  CHECK(outcome.failed_cells == 0);
  std::ifstream is(cfg.output_dir / "summary.csv");
  std::string header, row, extra;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(row.rfind("blobs,0.2,NC,1,", 0) == 0);
  CHECK(!std::getline(is, extra));
  const auto rows = summarize(cfg.output_dir);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mean_best_test_balanced_accuracy >= rows[0].mean_test_balanced_accuracy);
  fs::remove_all(root);
}

TEST_CASE("run_cell reads the test partition exactly once") {
  const auto root = scratch_dir("reads");
  const auto cfg = small_config(root);
  const auto data = load_pmlb(root / "blobs.tsv");
  const auto splits = make_split(data, 0.4, {}, 1, 2);
  GridCell cell{"blobs", 0.4, FitnessSpec::parse("TKNC"), 0};
  const auto result = run_cell(cfg, cell, splits);
  CHECK(splits.test_reads() == 1);
  CHECK(result.records.size() == 12);
  CHECK(result.best_fitness.size() == 2);
  for (const auto& r : result.records) CHECK(r.strategy == "TKNC");
  fs::remove_all(root);
}

TEST_CASE("grid expansion") {
  ExperimentConfig cfg;
  cfg.datasets = {"a", "b"};
  cfg.q_grid = {0.0, 0.4};
  cfg.strategies = {FitnessSpec::parse("NC"), FitnessSpec::parse("CERT")};
  cfg.repetitions = 3;
  const auto cells = expand_grid(cfg);
  CHECK(cells.size() == 2 * (1 + 2) * 3);
  CHECK(cells[0].strategy.label() == "SUPERVISED");
  CHECK(cells[3].q == 0.4);
  CHECK(cells[3].strategy.label() == "NC");
}

TEST_CASE("summary averages the best final accuracy over repetitions") {
  const std::vector<RunRecord> records = {
      final_row("d", 0.2, "NC", 0, 0.75), final_row("d", 0.2, "NC", 0, 0.5), final_row("d", 0.2, "NC", 1, 0.875),
      final_row("d", 0.8, "KMN", 0, 0.5), final_row("d", 0.8, "NC", 0, 0.625),
  };
  const auto rows = summarize_records(records);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].strategy == "NC");
  CHECK(rows[0].repetitions == 2);
  CHECK(rows[0].mean_best_test_balanced_accuracy == (0.75 + 0.875) / 2.0);
  CHECK(rows[0].max_test_balanced_accuracy == 0.875);
  CHECK(rows[0].mean_test_balanced_accuracy == (0.75 + 0.5 + 0.875) / 3.0);
  CHECK(rows[1].strategy == "KMN");

  const auto root = scratch_dir("plots");
  write_reports(records, root);
  std::ifstream svg(root / "plots" / "accuracy_vs_q.svg");
  std::stringstream ss;
  ss << svg.rdbuf();
  std::size_t series = 0;
  for (std::size_t pos = 0; (pos = ss.str().find("class=\"series\"", pos)) != std::string::npos; ++pos) ++series;
  CHECK(series == 2);
  fs::remove_all(root);

  auto not_final = records;
  for (auto& r : not_final) r.in_final = false;
  CHECK_THROWS_AS(summarize_records(not_final), DataError);
  CHECK_THROWS_AS(summarize_records({}), DataError);
}

TEST_CASE("records survive a CSV round trip") {
  RunRecord r = final_row("odd,name \"quoted\"", 0.6, "RET", 2, 0.1 + 0.2);
  r.seed = 18446744073709551615ULL;
  r.generation = 3;
  r.index = 1;
  r.evaluation = 17;
  r.fitness = 1.0 / 3.0;
  r.val_balanced_accuracy = 0.7;
  r.auxiliary = 42.0;
  r.failed = true;
  r.final_failed = true;
  r.descriptor = "widths=1;act=relu;init=normal;drop=0;bn=1";
  r.wall_time_ms = 12.5;
  std::stringstream ss;
  write_records(ss, {r, final_row("d", 0.0, "SUPERVISED", 0, 1.0)});
  const auto back = read_records(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == r);
  std::stringstream bad("not a header\n");
  CHECK_THROWS_AS(read_records(bad), DataError);
}

TEST_CASE("configuration text round trip and validation") {
  const std::string text =
      "[experiment]\ndatasets = breast_w, bupa\nq = 0, 0.4\nstrategies = NC, RET\nrepetitions = 2\nseed = 9\n"
      "[ga]\npopulation = 6\ngenerations = 3\n[coverage]\ntknc_k = 3\n[ret]\nlow = 0.3\nhigh = 0.7\n";
  const auto cfg = parse_config(text);
  CHECK(cfg.datasets == std::vector<std::string>{"breast_w", "bupa"});
  CHECK(cfg.q_grid == std::vector<double>{0.0, 0.4});
  CHECK(cfg.ga.population_size == 6);
  CHECK(cfg.strategies[0].coverage.top_k == 3);
  CHECK(cfg.strategies[1].ret_low == 0.3);
  const auto again = parse_config(resolved_config_text(cfg));
  CHECK(resolved_config_text(again) == resolved_config_text(cfg));
  CHECK(again.seed == 9);

  CHECK_THROWS_AS(parse_config("[experiment]\ndatasets = a\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nowhere]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\ndatasets = a\n[ga]\ncrossover = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\ndatasets = a\nq = 1.0\n"), ConfigError);
  CHECK_NOTHROW(parse_config("[experiment]\ndatasets = a\n[constants]\nanything = 1\n"));
}

TEST_CASE("final evaluation trains on labeled training and validation data") {
  const auto splits = make_split(testdata::blobs(60, 2, 6.0, 1.0, 3), 0.6, {}, 4, 5);
  CHECK(splits.labeled_union().size() == splits.train_labeled.size() + splits.val.size());
  const auto scores = final_evaluate({NetworkDescriptor::uniform({4}, Activation::relu),
                                      NetworkDescriptor::uniform({2, 2}, Activation::tanh)},
                                     splits, testdata::blob_train_config(), 8);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0].test_balanced_accuracy == 1.0);
  CHECK(!scores[0].failed);
  CHECK(splits.test_reads() == 1);
  TrainConfig wild;
  wild.learning_rate = 1e300;
  const auto failed = final_evaluate({NetworkDescriptor::uniform({4, 4}, Activation::identity)}, splits, wild, 8);
  CHECK(failed[0].failed);
  CHECK(failed[0].test_balanced_accuracy == 0.0);
}

TEST_CASE("a missing dataset fails its cells without stopping the grid") {
  const auto root = scratch_dir("missing");
  auto cfg = small_config(root);
  cfg.datasets = {"blobs", "absent_dataset"};
  cfg.repetitions = 1;
  const auto outcome = run_experiment(cfg);
  CHECK(outcome.failed_cells == 1);
  CHECK(read_file(cfg.output_dir / "records.csv").size() == 12);
  fs::remove_all(root);
}
