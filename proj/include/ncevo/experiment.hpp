#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ncevo/data.hpp"
#include "ncevo/descriptor.hpp"
#include "ncevo/evolution.hpp"
#include "ncevo/fitness.hpp"
#include "ncevo/nn.hpp"

namespace ncevo {

struct ExperimentConfig {
  std::vector<std::string> datasets;
  std::vector<double> q_grid{0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<FitnessSpec> strategies;
  std::size_t repetitions = 10;
  std::uint64_t seed = 0;
  GAConfig ga;
  TrainConfig train;
  SplitRatios ratios;
  std::filesystem::path output_dir = "results";
  std::vector<std::filesystem::path> data_dirs;  // searched before the cache
  bool fetch_missing = false;
  bool parallel_cells = false;

  void check() const;
};

/// INI text with sections [experiment], [split], [ga], [train], [coverage], [ret].
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every option with its effective value; parse_config accepts it back.
std::string resolved_config_text(const ExperimentConfig& config);

struct GridCell {
  std::string dataset;
  double q = 0.0;
  FitnessSpec strategy;
  std::size_t repetition = 0;
};

/// dataset x q x strategy x repetition, in that nesting order. A q = 0 entry
/// yields a single SUPERVISED cell per repetition.
std::vector<GridCell> expand_grid(const ExperimentConfig& config);

struct FinalScore {
  double test_balanced_accuracy = 0.0;
  bool failed = false;
};

/// Trains each descriptor afresh on train_labeled and val, then scores on the
/// test partition. Reads the test partition once.
std::vector<FinalScore> final_evaluate(const std::vector<NetworkDescriptor>& descriptors, const DatasetSplit& splits,
                                       const TrainConfig& train, std::uint64_t seed);

struct RunRecord {
  std::string dataset;
  double q = 0.0;
  std::string strategy;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;  // seed of the evaluation
  std::size_t generation = 0;
  std::size_t index = 0;
  std::size_t evaluation = 0;
  double fitness = 0.0;
  double val_balanced_accuracy = 0.0;
  double auxiliary = 0.0;
  bool failed = false;
  bool in_final = false;  // member of the last generation
  double test_balanced_accuracy = 0.0;
  bool final_failed = false;
  std::string descriptor;
  double wall_time_ms = 0.0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline constexpr const char* kRecordsVersionLine = "# ncevo records v1";

void write_records(std::ostream& os, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records(std::istream& is);

struct CellResult {
  GridCell cell;
  std::vector<RunRecord> records;
  std::vector<double> best_fitness;  // per generation
  std::filesystem::path run_dir;
  bool failed = false;
  std::string error;
};

/// Runs a single cell with an already prepared split and writes nothing.
CellResult run_cell(const ExperimentConfig& config, const GridCell& cell, const DatasetSplit& splits,
                    std::ostream* log = nullptr);

/// Seed for one component of a (dataset, repetition) pair.
std::uint64_t cell_seed(std::uint64_t global_seed, const std::string& dataset, std::size_t repetition,
                        std::uint64_t stream);

struct SummaryRow {
  std::string dataset;
  double q = 0.0;
  std::string strategy;
  std::size_t repetitions = 0;
  double mean_best_test_balanced_accuracy = 0.0;  // mean over repetitions of the best final test b_acc
  double max_test_balanced_accuracy = 0.0;
  double mean_test_balanced_accuracy = 0.0;        // mean over every final individual
};

/// One row per (dataset, q, strategy), in order of first appearance.
/// Throws when no record belongs to a final population.
std::vector<SummaryRow> summarize_records(const std::vector<RunRecord>& records);
void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows);

/// Writes summary.csv and plots/*.svg under `dir`.
std::vector<SummaryRow> write_reports(const std::vector<RunRecord>& records, const std::filesystem::path& dir);

/// Reads <dir>/records.csv and regenerates the reports.
std::vector<SummaryRow> summarize(const std::filesystem::path& results_dir);

struct ExperimentOutcome {
  std::filesystem::path output_dir;
  std::vector<CellResult> cells;
  std::size_t failed_cells = 0;
};

/// Runs the whole grid and writes records, summary, plots and resolved configs.
ExperimentOutcome run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace ncevo
