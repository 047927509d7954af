// Command line front end: run an experiment grid, rebuild reports, fetch datasets.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ncevo/data.hpp"
#include "ncevo/errors.hpp"
#include "ncevo/experiment.hpp"

namespace {

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& output,
                bool quiet) {
  ncevo::ExperimentConfig config = ncevo::load_config(config_path);
  if (seed) config.seed = *seed;
  if (!output.empty()) config.output_dir = output;
  const auto outcome = ncevo::run_experiment(config, quiet ? nullptr : &std::cerr);
  std::cout << "results written to " << outcome.output_dir.string() << " (" << outcome.cells.size() << " runs, "
            << outcome.failed_cells << " failed)\n";
  return outcome.failed_cells == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}

int summarize_command(const std::string& dir) {
  const auto rows = ncevo::summarize(dir);
  ncevo::write_summary(std::cout, rows);
  return EXIT_SUCCESS;
}

int fetch_command(const std::string& name, const std::string& cache) {
  const auto path = ncevo::fetch_pmlb(name, cache.empty() ? ncevo::default_cache_dir() : std::filesystem::path(cache));
  const auto data = ncevo::load_pmlb(path);
  std::cout << path.string() << ": " << data.labels.size() << " rows, " << data.features.cols() << " features, "
            << data.dropped_rows << " dropped\n";
  return EXIT_SUCCESS;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neuroevolution of MLP classifiers with coverage-guided fitness for semi-supervised learning"};
  app.require_subcommand(1);
  app.footer("Environment: NCEVO_CACHE_DIR overrides the dataset cache directory.");

  std::string config_path, output;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run the experiment grid described by a config file");
  run->add_option("config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the global seed");
  run->add_option("--output", output, "Override the output directory");
  run->add_flag("--quiet", quiet, "Suppress progress output");

  std::string results_dir;
  auto* summarize = app.add_subcommand("summarize", "Rebuild summary.csv and plots from records.csv");
  summarize->add_option("results-dir", results_dir, "Directory holding records.csv")
      ->required()
      ->check(CLI::ExistingDirectory);

  std::string dataset, cache;
  auto* fetch = app.add_subcommand("fetch", "Download a PMLB dataset into the cache");
  fetch->add_option("name", dataset, "PMLB dataset name")->required();
  fetch->add_option("--cache", cache, "Cache directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(config_path, seed, output, quiet);
    if (*summarize) return summarize_command(results_dir);
    if (*fetch) return fetch_command(dataset, cache);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return EXIT_FAILURE;
}
