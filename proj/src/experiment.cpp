#include "ncevo/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ncevo/errors.hpp"
#include "ncevo/plot.hpp"
#include "ncevo/random.hpp"

namespace ncevo {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

enum SeedStream : std::uint64_t { kSplitStream = 1, kMaskStream = 2, kEvolutionStream = 3, kFinalStream = 4 };

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ConfigError(std::string(what) + ": not a number: '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, std::string_view what) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ConfigError(std::string(what) + ": not a non-negative integer: '" + std::string(s) + "'");
  return v;
}

bool parse_bool(const std::string& s, std::string_view what) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(std::string(what) + ": not a boolean: '" + s + "'");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (auto t = trim(item); !t.empty()) out.push_back(std::move(t));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += fmt(items[i]);
  }
  return out;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment",
       {"datasets", "q", "strategies", "repetitions", "seed", "output", "data_dirs", "fetch", "parallel_cells"}},
      {"split", {"train", "val", "test"}},
      {"ga", {"population", "generations", "selection", "crossover", "max_depth", "max_width", "threads"}},
      {"train", {"epochs", "batch_size", "learning_rate", "optimizer"}},
      {"coverage", {"nc_threshold", "tknc_k", "kmn_sections"}},
      {"ret", {"low", "high"}},
  };
  return keys;
}

bool same_shared_settings(const FitnessSpec& a, const FitnessSpec& b) {
  return a.coverage.threshold == b.coverage.threshold && a.coverage.top_k == b.coverage.top_k &&
         a.coverage.sections == b.coverage.sections && a.ret_low == b.ret_low && a.ret_high == b.ret_high;
}

FitnessSpec supervised_like(const ExperimentConfig& config) {
  FitnessSpec spec = config.strategies.empty() ? FitnessSpec{} : config.strategies.front();
  spec.strategy = Strategy::supervised;
  spec.coverage.metric = CoverageMetric::nc;
  return spec;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("unterminated quote in records line");
  out.push_back(std::move(cur));
  return out;
}

constexpr const char* kRecordColumns =
    "dataset,q,strategy,repetition,seed,generation,index,evaluation,fitness,val_bacc,aux,failed,final,test_bacc,"
    "final_failed,descriptor,wall_time_ms";
constexpr std::size_t kRecordColumnCount = 17;

std::string run_dir_name(const GridCell& cell) {
  return "q" + format_double(cell.q) + "_" + cell.strategy.label() + "_rep" + std::to_string(cell.repetition);
}

std::string cell_label(const GridCell& cell) {
  return cell.dataset + " q=" + format_double(cell.q) + " " + cell.strategy.label() + " rep " +
         std::to_string(cell.repetition);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("write failed for " + path.string());
}

class SharedLog {
 public:
  explicit SharedLog(std::ostream* os) : os_(os) {}
  void line(const std::string& s) {
    if (!os_) return;
    std::lock_guard lock(mutex_);
    *os_ << s << '\n' << std::flush;
  }

 private:
  std::ostream* os_;
  std::mutex mutex_;
};

std::vector<fs::path> search_dirs(const ExperimentConfig& config) {
  std::vector<fs::path> dirs = config.data_dirs;
  dirs.push_back(default_cache_dir());
  return dirs;
}

Dataset obtain_dataset(const ExperimentConfig& config, const std::string& name) {
  const auto dirs = search_dirs(config);
  if (auto path = find_dataset(name, dirs)) return load_pmlb(*path);
  if (config.fetch_missing) return load_pmlb(fetch_pmlb(name, default_cache_dir()));
  std::string where;
  for (const auto& d : dirs) where += " " + d.string();
  throw DataError("dataset '" + name + "' not found in:" + where + " (enable fetch or run the fetch command)");
}

}  // namespace

// ---- configuration ----

void ExperimentConfig::check() const {
  if (datasets.empty()) throw ConfigError("no datasets configured");
  if (q_grid.empty()) throw ConfigError("empty q grid");
  for (double q : q_grid)
    if (!(q >= 0.0 && q < 1.0)) throw ConfigError("q values must lie in [0, 1), got " + format_double(q));
  const bool any_positive = std::any_of(q_grid.begin(), q_grid.end(), [](double q) { return q > 0.0; });
  if (any_positive && strategies.empty()) throw ConfigError("no strategies configured");
  for (const auto& s : strategies) {
    s.check();
    if (!same_shared_settings(s, strategies.front()))
      throw ConfigError("all strategies must share coverage and retraining settings");
  }
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be positive and sum to 1");
  ga.check();
  train.check();
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (section == "constants") continue;
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) {
      if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
      throw ConfigError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, _] : body)
      if (!it->second.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
  }

  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return trim(*v);
    return std::nullopt;
  };

  ExperimentConfig c;
  if (auto v = get("experiment.datasets")) c.datasets = split_list(*v);
  if (auto v = get("experiment.q")) {
    c.q_grid.clear();
    for (const auto& s : split_list(*v)) c.q_grid.push_back(parse_double(s, "experiment.q"));
  }
  if (auto v = get("experiment.repetitions")) c.repetitions = parse_int<std::size_t>(*v, "experiment.repetitions");
  if (auto v = get("experiment.seed")) c.seed = parse_int<std::uint64_t>(*v, "experiment.seed");
  if (auto v = get("experiment.output")) c.output_dir = *v;
  if (auto v = get("experiment.data_dirs"))
    for (const auto& s : split_list(*v)) c.data_dirs.emplace_back(s);
  if (auto v = get("experiment.fetch")) c.fetch_missing = parse_bool(*v, "experiment.fetch");
  if (auto v = get("experiment.parallel_cells")) c.parallel_cells = parse_bool(*v, "experiment.parallel_cells");

  if (auto v = get("split.train")) c.ratios.train = parse_double(*v, "split.train");
  if (auto v = get("split.val")) c.ratios.val = parse_double(*v, "split.val");
  if (auto v = get("split.test")) c.ratios.test = parse_double(*v, "split.test");

  if (auto v = get("ga.population")) c.ga.population_size = parse_int<std::size_t>(*v, "ga.population");
  if (auto v = get("ga.generations")) c.ga.generations = parse_int<std::size_t>(*v, "ga.generations");
  if (auto v = get("ga.selection")) c.ga.selection_size = parse_int<std::size_t>(*v, "ga.selection");
  if (auto v = get("ga.crossover")) c.ga.crossover_probability = parse_double(*v, "ga.crossover");
  if (auto v = get("ga.max_depth")) c.ga.constraints.max_depth = parse_int<std::size_t>(*v, "ga.max_depth");
  if (auto v = get("ga.max_width")) c.ga.constraints.max_width = parse_int<std::size_t>(*v, "ga.max_width");
  if (auto v = get("ga.threads")) c.ga.threads = parse_int<std::size_t>(*v, "ga.threads");

  if (auto v = get("train.epochs")) c.train.epochs = parse_int<std::size_t>(*v, "train.epochs");
  if (auto v = get("train.batch_size")) c.train.batch_size = parse_int<std::size_t>(*v, "train.batch_size");
  if (auto v = get("train.learning_rate")) c.train.learning_rate = parse_double(*v, "train.learning_rate");
  if (auto v = get("train.optimizer")) c.train.optimizer = parse_optimizer(*v);

  CoverageConfig cov;
  if (auto v = get("coverage.nc_threshold")) cov.threshold = parse_double(*v, "coverage.nc_threshold");
  if (auto v = get("coverage.tknc_k")) cov.top_k = parse_int<std::size_t>(*v, "coverage.tknc_k");
  if (auto v = get("coverage.kmn_sections")) cov.sections = parse_int<std::size_t>(*v, "coverage.kmn_sections");
  double low = 0.4, high = 0.6;
  if (auto v = get("ret.low")) low = parse_double(*v, "ret.low");
  if (auto v = get("ret.high")) high = parse_double(*v, "ret.high");

  std::vector<std::string> names{"NC", "TKNC", "KMN", "NBC", "SNAC", "CERT", "RET"};
  if (auto v = get("experiment.strategies")) names = split_list(*v);
  for (const auto& name : names) {
    FitnessSpec spec;
    try {
      spec = FitnessSpec::parse(name, cov);
    } catch (const Error&) {
      throw ConfigError("config: unknown strategy '" + name + "'");
    }
    spec.ret_low = low;
    spec.ret_high = high;
    c.strategies.push_back(spec);
  }
  c.check();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string resolved_config_text(const ExperimentConfig& c) {
  const FitnessSpec shared = supervised_like(c);
  std::ostringstream os;
  os << "; resolved configuration, every option materialized\n";
  os << "[experiment]\n";
  os << "datasets = " << join(c.datasets, [](const std::string& s) { return s; }) << '\n';
  os << "q = " << join(c.q_grid, format_double) << '\n';
  os << "strategies = " << join(c.strategies, [](const FitnessSpec& s) { return s.label(); }) << '\n';
  os << "repetitions = " << c.repetitions << '\n';
  os << "seed = " << c.seed << '\n';
  os << "output = " << c.output_dir.string() << '\n';
  os << "data_dirs = " << join(c.data_dirs, [](const fs::path& p) { return p.string(); }) << '\n';
  os << "fetch = " << (c.fetch_missing ? "true" : "false") << '\n';
  os << "parallel_cells = " << (c.parallel_cells ? "true" : "false") << '\n';
  os << "\n[split]\n";
  os << "train = " << format_double(c.ratios.train) << '\n';
  os << "val = " << format_double(c.ratios.val) << '\n';
  os << "test = " << format_double(c.ratios.test) << '\n';
  os << "\n[ga]\n";
  os << "population = " << c.ga.population_size << '\n';
  os << "generations = " << c.ga.generations << '\n';
  os << "selection = " << c.ga.effective_selection_size() << '\n';
  os << "crossover = " << format_double(c.ga.crossover_probability) << '\n';
  os << "max_depth = " << c.ga.constraints.max_depth << '\n';
  os << "max_width = " << c.ga.constraints.max_width << '\n';
  os << "threads = " << c.ga.threads << '\n';
  os << "\n[train]\n";
  os << "epochs = " << c.train.epochs << '\n';
  os << "batch_size = " << c.train.batch_size << '\n';
  os << "learning_rate = " << format_double(c.train.learning_rate) << '\n';
  os << "optimizer = " << to_string(c.train.optimizer) << '\n';
  os << "\n[coverage]\n";
  os << "nc_threshold = " << format_double(shared.coverage.threshold) << '\n';
  os << "tknc_k = " << shared.coverage.top_k << '\n';
  os << "kmn_sections = " << shared.coverage.sections << '\n';
  os << "\n[ret]\n";
  os << "low = " << format_double(shared.ret_low) << '\n';
  os << "high = " << format_double(shared.ret_high) << '\n';
  os << "\n; fixed by the implementation, listed for reference only\n[constants]\n";
  os << "dropout_rate = " << format_double(kDropoutRate) << '\n';
  os << "batch_norm_momentum = " << format_double(kBatchNormMomentum) << '\n';
  os << "batch_norm_epsilon = " << format_double(kBatchNormEpsilon) << '\n';
  os << "elu_alpha = " << format_double(kEluAlpha) << '\n';
  os << "normal_init_stddev = " << format_double(kNormalInitStddev) << '\n';
  os << "uniform_init_limit = " << format_double(kUniformInitLimit) << '\n';
  os << "decision_threshold = 0.5\n";
  return os.str();
}

std::vector<GridCell> expand_grid(const ExperimentConfig& config) {
  std::vector<GridCell> cells;
  for (const auto& dataset : config.datasets)
    for (double q : config.q_grid) {
      std::vector<FitnessSpec> specs = q == 0.0 ? std::vector<FitnessSpec>{supervised_like(config)} : config.strategies;
      for (const auto& spec : specs)
        for (std::size_t r = 0; r < config.repetitions; ++r) cells.push_back(GridCell{dataset, q, spec, r});
    }
  return cells;
}

std::uint64_t cell_seed(std::uint64_t global_seed, const std::string& dataset, std::size_t repetition,
                        std::uint64_t stream) {
  return derive_seed(global_seed, {hash_name(dataset), repetition, stream});
}

// ---- final evaluation ----

std::vector<FinalScore> final_evaluate(const std::vector<NetworkDescriptor>& descriptors, const DatasetSplit& splits,
                                       const TrainConfig& train, std::uint64_t seed) {
  const LabeledSet train_set = splits.labeled_union();
  const LabeledSet& test = splits.test();
  std::vector<FinalScore> scores;
  scores.reserve(descriptors.size());
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    try {
      const Network net = build_and_train(descriptors[i], train_set, train, derive_seed(seed, {i}));
      scores.push_back({balanced_accuracy(to_labels(predict_proba(net, test.features)), test.labels), false});
    } catch (const TrainingError&) {
      scores.push_back({0.0, true});
    }
  }
  return scores;
}

// ---- records ----

void write_records(std::ostream& os, const std::vector<RunRecord>& records) {
  os << kRecordsVersionLine << '\n' << kRecordColumns << '\n';
  for (const auto& r : records) {
    os << csv_field(r.dataset) << ',' << format_double(r.q) << ',' << csv_field(r.strategy) << ',' << r.repetition
       << ',' << r.seed << ',' << r.generation << ',' << r.index << ',' << r.evaluation << ','
       << format_double(r.fitness) << ',' << format_double(r.val_balanced_accuracy) << ','
       << format_double(r.auxiliary) << ',' << int{r.failed} << ',' << int{r.in_final} << ','
       << format_double(r.test_balanced_accuracy) << ',' << int{r.final_failed} << ',' << csv_field(r.descriptor)
       << ',' << format_double(r.wall_time_ms) << '\n';
  }
}

std::vector<RunRecord> read_records(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != kRecordsVersionLine)
    throw DataError("records: missing or unsupported version line");
  if (!std::getline(is, line) || trim(line) != kRecordColumns) throw DataError("records: unexpected header");
  std::vector<RunRecord> out;
  std::size_t line_no = 2;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != kRecordColumnCount)
      throw DataError("records line " + std::to_string(line_no) + ": expected " +
                      std::to_string(kRecordColumnCount) + " fields");
    try {
      RunRecord r;
      r.dataset = f[0];
      r.q = parse_double(f[1], "q");
      r.strategy = f[2];
      r.repetition = parse_int<std::size_t>(f[3], "repetition");
      r.seed = parse_int<std::uint64_t>(f[4], "seed");
      r.generation = parse_int<std::size_t>(f[5], "generation");
      r.index = parse_int<std::size_t>(f[6], "index");
      r.evaluation = parse_int<std::size_t>(f[7], "evaluation");
      r.fitness = parse_double(f[8], "fitness");
      r.val_balanced_accuracy = parse_double(f[9], "val_bacc");
      r.auxiliary = parse_double(f[10], "aux");
      r.failed = f[11] == "1";
      r.in_final = f[12] == "1";
      r.test_balanced_accuracy = parse_double(f[13], "test_bacc");
      r.final_failed = f[14] == "1";
      r.descriptor = f[15];
      r.wall_time_ms = parse_double(f[16], "wall_time_ms");
      out.push_back(std::move(r));
    } catch (const ConfigError& e) {
      throw DataError("records line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---- one cell ----

CellResult run_cell(const ExperimentConfig& config, const GridCell& cell, const DatasetSplit& splits,
                    std::ostream* log) {
  CellResult result;
  result.cell = cell;

  std::mutex time_mutex;
  std::map<std::uint64_t, double> wall_ms;
  const FitnessSpec spec = cell.strategy;
  const FitnessEvaluator evaluator = [&](const NetworkDescriptor& d, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    FitnessValue v = evaluate_fitness(spec, d, splits, config.train, seed);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    std::lock_guard lock(time_mutex);
    wall_ms[seed] = ms;
    return v;
  };

  GAConfig ga = config.ga;
  ga.global_seed = cell_seed(config.seed, cell.dataset, cell.repetition, kEvolutionStream);
  const EvolutionResult evo = evolve(ga, evaluator, [&](const GenerationSnapshot& s) {
    if (log) *log << format_generation_log(s) << '\n';
  });
  result.best_fitness = evo.best_fitness;

  const auto& final_pop = evo.final_population();
  std::vector<NetworkDescriptor> final_descriptors;
  for (const auto& ind : final_pop) final_descriptors.push_back(ind.descriptor);
  const auto scores = final_evaluate(final_descriptors, splits, config.train,
                                     cell_seed(config.seed, cell.dataset, cell.repetition, kFinalStream));
  std::map<IndividualId, FinalScore> final_by_id;
  for (std::size_t i = 0; i < final_pop.size(); ++i) final_by_id[final_pop[i].id] = scores[i];
  if (log)
    for (std::size_t i = 0; i < final_pop.size(); ++i)
      *log << "final " << i << " test_bacc=" << format_double(scores[i].test_balanced_accuracy)
           << (scores[i].failed ? " (training failed)" : "") << " descriptor=" << to_text(final_pop[i].descriptor)
           << '\n';

  const std::string label = cell.strategy.label();
  for (const auto& ind : evo.evaluated) {
    RunRecord r;
    r.dataset = cell.dataset;
    r.q = cell.q;
    r.strategy = label;
    r.repetition = cell.repetition;
    r.seed = individual_seed(ga.global_seed, ind.id);
    r.generation = ind.id.generation;
    r.index = ind.id.index;
    r.evaluation = ind.evaluation;
    r.fitness = ind.fitness->f;
    r.val_balanced_accuracy = ind.fitness->balanced_accuracy;
    r.auxiliary = ind.fitness->auxiliary;
    r.failed = ind.fitness->failed;
    if (auto it = final_by_id.find(ind.id); it != final_by_id.end()) {
      r.in_final = true;
      r.test_balanced_accuracy = it->second.test_balanced_accuracy;
      r.final_failed = it->second.failed;
    }
    r.descriptor = to_text(ind.descriptor);
    r.wall_time_ms = wall_ms.count(r.seed) ? wall_ms[r.seed] : 0.0;
    result.records.push_back(std::move(r));
  }
  return result;
}

// ---- summary and plots ----

std::vector<SummaryRow> summarize_records(const std::vector<RunRecord>& records) {
  struct Acc {
    SummaryRow row;
    std::map<std::size_t, double> best_per_rep;
    double total = 0.0;
    std::size_t count = 0;
  };
  std::vector<Acc> groups;
  for (const auto& r : records) {
    if (!r.in_final) continue;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Acc& a) {
      return a.row.dataset == r.dataset && a.row.q == r.q && a.row.strategy == r.strategy;
    });
    if (it == groups.end()) {
      groups.push_back(Acc{});
      it = std::prev(groups.end());
      it->row.dataset = r.dataset;
      it->row.q = r.q;
      it->row.strategy = r.strategy;
      it->row.max_test_balanced_accuracy = r.test_balanced_accuracy;
    }
    auto [pos, inserted] = it->best_per_rep.try_emplace(r.repetition, r.test_balanced_accuracy);
    if (!inserted) pos->second = std::max(pos->second, r.test_balanced_accuracy);
    it->row.max_test_balanced_accuracy = std::max(it->row.max_test_balanced_accuracy, r.test_balanced_accuracy);
    it->total += r.test_balanced_accuracy;
    ++it->count;
  }
  if (groups.empty()) throw DataError("no final-generation records to summarize");
  std::vector<SummaryRow> rows;
  for (auto& g : groups) {
    double sum = 0.0;
    for (const auto& [rep, best] : g.best_per_rep) sum += best;
    g.row.repetitions = g.best_per_rep.size();
    g.row.mean_best_test_balanced_accuracy = sum / static_cast<double>(g.best_per_rep.size());
    g.row.mean_test_balanced_accuracy = g.total / static_cast<double>(g.count);
    rows.push_back(g.row);
  }
  return rows;
}

void write_summary(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "dataset,q,strategy,repetitions,mean_best_test_bacc,max_test_bacc,mean_test_bacc\n";
  for (const auto& r : rows)
    os << csv_field(r.dataset) << ',' << format_double(r.q) << ',' << csv_field(r.strategy) << ',' << r.repetitions
       << ',' << format_double(r.mean_best_test_balanced_accuracy) << ','
       << format_double(r.max_test_balanced_accuracy) << ',' << format_double(r.mean_test_balanced_accuracy)
       << '\n';
}

namespace {

/// Mean over datasets of the mean-best test accuracy, one series per strategy.
std::vector<Series> accuracy_series(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::map<double, std::pair<double, std::size_t>>> acc;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.strategy) == order.end()) order.push_back(r.strategy);
    auto& cell = acc[r.strategy][r.q];
    cell.first += r.mean_best_test_balanced_accuracy;
    ++cell.second;
  }
  std::vector<Series> out;
  for (const auto& name : order) {
    Series s{name, {}};
    for (const auto& [q, sum_n] : acc[name]) s.points.emplace_back(q, sum_n.first / static_cast<double>(sum_n.second));
    out.push_back(std::move(s));
  }
  return out;
}

/// Best-so-far fitness by evaluation number, averaged over runs of each (strategy, q).
std::vector<Series> fitness_series(const std::vector<RunRecord>& records) {
  using RunKey = std::tuple<std::string, double, std::string, std::size_t>;
  std::vector<std::pair<std::string, double>> order;
  std::map<std::pair<std::string, double>, std::vector<RunKey>> runs_of;
  std::map<RunKey, std::vector<double>> curves;
  for (const auto& r : records) {
    if (r.evaluation == 0) continue;  // evaluation numbers are 1-based; 0 marks a row without one
    const auto series_key = std::make_pair(r.strategy, r.q);
    const RunKey run{r.dataset, r.q, r.strategy, r.repetition};
    if (!runs_of.count(series_key)) order.push_back(series_key);
    auto& runs = runs_of[series_key];
    if (std::find(runs.begin(), runs.end(), run) == runs.end()) runs.push_back(run);
    auto& curve = curves[run];
    if (curve.size() < r.evaluation) curve.resize(r.evaluation, -1.0);
    curve[r.evaluation - 1] = r.fitness;
  }
  std::vector<Series> out;
  for (const auto& key : order) {
    std::vector<double> sum;
    std::vector<std::size_t> count;
    for (const auto& run : runs_of[key]) {
      const auto& curve = curves[run];
      double best = -1.0;
      for (std::size_t e = 0; e < curve.size(); ++e) {
        best = std::max(best, curve[e]);
        if (best < 0.0) continue;
        if (sum.size() <= e) sum.resize(e + 1, 0.0), count.resize(e + 1, 0);
        sum[e] += best;
        ++count[e];
      }
    }
    Series s{key.first + " q=" + format_double(key.second), {}};
    for (std::size_t e = 0; e < sum.size(); ++e)
      if (count[e]) s.points.emplace_back(static_cast<double>(e + 1), sum[e] / static_cast<double>(count[e]));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<SummaryRow> write_reports(const std::vector<RunRecord>& records, const fs::path& dir) {
  const auto rows = summarize_records(records);
  fs::create_directories(dir / "plots");
  std::ostringstream summary;
  write_summary(summary, rows);
  write_text(dir / "summary.csv", summary.str());
  write_text(dir / "plots" / "accuracy_vs_q.svg",
             line_chart_svg("Mean best test balanced accuracy", "q (unlabeled fraction)", "balanced accuracy",
                            accuracy_series(rows)));
  write_text(dir / "plots" / "fitness_vs_evaluation.svg",
             line_chart_svg("Best fitness so far", "evaluation", "fitness", fitness_series(records)));
  return rows;
}

std::vector<SummaryRow> summarize(const fs::path& results_dir) {
  std::ifstream is(results_dir / "records.csv", std::ios::binary);
  if (!is) throw DataError("cannot open " + (results_dir / "records.csv").string());
  return write_reports(read_records(is), results_dir);
}

// ---- whole grid ----

ExperimentOutcome run_experiment(const ExperimentConfig& config, std::ostream* log) {
  config.check();
  ExperimentOutcome outcome;
  outcome.output_dir = config.output_dir;
  fs::create_directories(config.output_dir);
  const std::string resolved = resolved_config_text(config);
  write_text(config.output_dir / "resolved_config.txt", resolved);

  SharedLog shared(log);
  std::map<std::string, Dataset> datasets;
  std::map<std::string, std::string> dataset_errors;
  for (const auto& name : config.datasets) {
    if (datasets.count(name) || dataset_errors.count(name)) continue;
    try {
      datasets.emplace(name, obtain_dataset(config, name));
      const auto& d = datasets.at(name);
      shared.line("loaded " + name + ": " + std::to_string(d.labels.size()) + " rows, " +
                  std::to_string(d.features.cols()) + " features, " + std::to_string(d.dropped_rows) +
                  " dropped");
    } catch (const std::exception& e) {
      dataset_errors.emplace(name, e.what());
      shared.line("error: " + std::string(e.what()));
    }
  }

  const auto cells = expand_grid(config);
  auto run_one = [&](const GridCell& cell) {
    CellResult result;
    result.cell = cell;
    result.run_dir = config.output_dir / "runs" / cell.dataset / run_dir_name(cell);
    std::ostringstream cell_log;
    try {
      fs::create_directories(result.run_dir);
      write_text(result.run_dir / "resolved_config.txt", resolved);
      if (auto err = dataset_errors.find(cell.dataset); err != dataset_errors.end()) throw DataError(err->second);
      const Dataset& dataset = datasets.at(cell.dataset);
      const DatasetSplit splits =
          make_split(dataset, cell.q, config.ratios,
                     cell_seed(config.seed, cell.dataset, cell.repetition, kSplitStream),
                     derive_seed(cell_seed(config.seed, cell.dataset, cell.repetition, kMaskStream),
                                 {static_cast<std::uint64_t>(std::llround(cell.q * 1000.0))}));
      cell_log << "cell " << cell_label(cell) << ": labeled=" << splits.train_labeled.size()
               << " unlabeled=" << splits.train_unlabeled.rows() << " val=" << splits.val.size() << '\n';
      CellResult ran = run_cell(config, cell, splits, &cell_log);
      result.records = std::move(ran.records);
      result.best_fitness = std::move(ran.best_fitness);
      std::ostringstream rec;
      write_records(rec, result.records);
      write_text(result.run_dir / "records.csv", rec.str());
    } catch (const std::exception& e) {
      result.failed = true;
      result.error = e.what();
      cell_log << "cell failed: " << e.what() << '\n';
    }
    try {
      write_text(result.run_dir / "log.txt", cell_log.str());
    } catch (const std::exception&) {
    }
    double best = 0.0;
    for (const auto& r : result.records)
      if (r.in_final) best = std::max(best, r.test_balanced_accuracy);
    shared.line(result.failed ? "FAILED " + cell_label(cell) + ": " + result.error
                              : "done " + cell_label(cell) + " best_test_bacc=" + format_double(best));
    return result;
  };

  if (config.parallel_cells) {
    std::vector<std::future<CellResult>> futures;
    for (const auto& cell : cells) futures.push_back(std::async(std::launch::async, run_one, cell));
    for (auto& f : futures) outcome.cells.push_back(f.get());
  } else {
    for (const auto& cell : cells) outcome.cells.push_back(run_one(cell));
  }

  std::vector<RunRecord> all;
  for (const auto& c : outcome.cells) {
    if (c.failed) ++outcome.failed_cells;
    all.insert(all.end(), c.records.begin(), c.records.end());
  }
  std::ostringstream rec;
  write_records(rec, all);
  write_text(config.output_dir / "records.csv", rec.str());
  if (!all.empty()) write_reports(all, config.output_dir);
  return outcome;
}

}  // namespace ncevo
