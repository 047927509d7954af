#include "ncevo/evolution.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "ncevo/errors.hpp"

namespace ncevo {

namespace {

constexpr std::uint64_t kMutationStream = 0x6d7574617465ULL;

std::size_t pick_layer(const NetworkDescriptor& d, Rng& rng) {
  return uniform_int<std::size_t>(rng, 0, d.depth() - 1);
}

template <typename T, std::size_t N>
T pick_other(const std::array<T, N>& table, T current, Rng& rng) {
  auto idx = uniform_int<std::size_t>(rng, 0, N - 2);
  if (idx >= static_cast<std::size_t>(current)) ++idx;
  return table[idx];
}

void evaluate_all(std::vector<Individual>& pending, const FitnessEvaluator& evaluator, std::uint64_t global_seed,
                  std::size_t threads) {
  auto run_one = [&](Individual& ind) {
    ind.fitness = evaluator(ind.descriptor, individual_seed(global_seed, ind.id));
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(pending.size(), 1));
  if (threads == 1) {
    for (auto& ind : pending) run_one(ind);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < pending.size(); i = next++) {
          try {
            run_one(pending[i]);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

void GAConfig::check() const {
  if (population_size < 2) throw ConfigError("population_size must be >= 2");
  if (generations < 1) throw ConfigError("generations must be >= 1");
  if (effective_selection_size() < 1 || effective_selection_size() > population_size)
    throw ConfigError("selection_size must lie in [1, population_size]");
  if (crossover_probability != 0.0) throw ConfigError("crossover is not supported; crossover_probability must be 0");
  if (constraints.max_depth < 1 || constraints.max_width < 1) throw ConfigError("search constraints must be >= 1");
}

std::size_t GAConfig::effective_selection_size() const noexcept {
  return selection_size ? selection_size : std::max<std::size_t>(population_size / 2, 1);
}

double Individual::fitness_or_throw() const {
  if (!fitness) throw Error("individual (" + std::to_string(id.generation) + "," + std::to_string(id.index) +
                            ") has not been evaluated");
  return fitness->f;
}

std::string_view to_string(MutationOp op) {
  switch (op) {
    case MutationOp::layer_change: return "layer_change";
    case MutationOp::add_layer: return "add_layer";
    case MutationOp::del_layer: return "del_layer";
    case MutationOp::activ_change: return "activ_change";
    case MutationOp::weight_change: return "weight_change";
  }
  return "?";
}

std::optional<NetworkDescriptor> layer_change(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng) {
  NetworkDescriptor out = d;
  const std::size_t j = pick_layer(d, rng);
  NetworkDescriptor fresh;
  insert_random_layer(fresh, 0, c, rng);
  out.hidden_widths[j] = fresh.hidden_widths[0];
  out.activations[j] = fresh.activations[0];
  out.initializers[j] = fresh.initializers[0];
  out.dropout[j] = fresh.dropout[0];
  out.batch_norm[j] = fresh.batch_norm[0];
  return out;
}

std::optional<NetworkDescriptor> add_layer(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng) {
  if (d.depth() >= c.max_depth) return std::nullopt;
  NetworkDescriptor out = d;
  insert_random_layer(out, uniform_int<std::size_t>(rng, 0, d.depth()), c, rng);
  return out;
}

std::optional<NetworkDescriptor> del_layer(const NetworkDescriptor& d, const SearchConstraints&, Rng& rng) {
  if (d.depth() <= 1) return std::nullopt;
  NetworkDescriptor out = d;
  const auto j = static_cast<long>(pick_layer(d, rng));
  out.hidden_widths.erase(out.hidden_widths.begin() + j);
  out.activations.erase(out.activations.begin() + j);
  out.initializers.erase(out.initializers.begin() + j);
  out.dropout.erase(out.dropout.begin() + j);
  out.batch_norm.erase(out.batch_norm.begin() + j);
  return out;
}

std::optional<NetworkDescriptor> activ_change(const NetworkDescriptor& d, const SearchConstraints&, Rng& rng) {
  NetworkDescriptor out = d;
  const std::size_t j = pick_layer(d, rng);
  out.activations[j] = pick_other(kActivations, d.activations[j], rng);
  return out;
}

std::optional<NetworkDescriptor> weight_change(const NetworkDescriptor& d, const SearchConstraints&, Rng& rng) {
  NetworkDescriptor out = d;
  const std::size_t j = pick_layer(d, rng);
  out.initializers[j] = pick_other(kInitializers, d.initializers[j], rng);
  return out;
}

std::optional<NetworkDescriptor> apply_mutation(MutationOp op, const NetworkDescriptor& d, const SearchConstraints& c,
                                                Rng& rng) {
  switch (op) {
    case MutationOp::layer_change: return layer_change(d, c, rng);
    case MutationOp::add_layer: return add_layer(d, c, rng);
    case MutationOp::del_layer: return del_layer(d, c, rng);
    case MutationOp::activ_change: return activ_change(d, c, rng);
    case MutationOp::weight_change: return weight_change(d, c, rng);
  }
  return std::nullopt;
}

Mutation mutate(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng) {
  for (std::size_t redraws = 0;; ++redraws) {
    const MutationOp op = kMutationOps[uniform_int<std::size_t>(rng, 0, kMutationOps.size() - 1)];
    if (auto out = apply_mutation(op, d, c, rng)) return Mutation{std::move(*out), op, redraws};
  }
}

bool fitter(const Individual& a, const Individual& b) {
  const double fa = a.fitness_or_throw(), fb = b.fitness_or_throw();
  if (fa != fb) return fa > fb;
  return a.id < b.id;
}

std::vector<Individual> truncation_select(std::span<const Individual> population, std::size_t q) {
  if (q > population.size()) throw ConfigError("selection size exceeds population");
  for (const auto& ind : population) ind.fitness_or_throw();
  std::vector<Individual> sorted(population.begin(), population.end());
  std::stable_sort(sorted.begin(), sorted.end(), fitter);
  sorted.resize(q);
  return sorted;
}

double GenerationSnapshot::best_fitness() const {
  double best = 0.0;
  for (const auto& ind : population) best = std::max(best, ind.fitness_or_throw());
  return best;
}

double GenerationSnapshot::mean_fitness() const {
  if (population.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ind : population) total += ind.fitness_or_throw();
  return total / static_cast<double>(population.size());
}

std::string format_generation_log(const GenerationSnapshot& snapshot) {
  std::ostringstream os;
  os.precision(6);
  os << "generation " << snapshot.generation << " best=" << snapshot.best_fitness()
     << " mean=" << snapshot.mean_fitness();
  if (!snapshot.population.empty()) os << " descriptor=" << to_text(snapshot.population.front().descriptor);
  return os.str();
}

std::uint64_t individual_seed(std::uint64_t global_seed, const IndividualId& id) noexcept {
  return derive_seed(global_seed, {id.generation, id.index});
}

EvolutionResult evolve(const GAConfig& config, const FitnessEvaluator& evaluator,
                       const GenerationCallback& on_generation) {
  config.check();
  EvolutionResult result;

  auto record = [&result](std::vector<Individual>& batch) {
    for (auto& ind : batch) {
      ind.evaluation = result.evaluated.size() + 1;
      result.evaluated.push_back(ind);
    }
  };

  Rng init_rng(derive_seed(config.global_seed, {kMutationStream, 0}));
  std::vector<Individual> population;
  for (std::size_t i = 0; i < config.population_size; ++i)
    population.push_back(Individual{{0, i}, random_descriptor(config.constraints, init_rng), std::nullopt, 0});
  evaluate_all(population, evaluator, config.global_seed, config.threads);
  record(population);
  std::stable_sort(population.begin(), population.end(), fitter);
  result.snapshots.push_back(GenerationSnapshot{0, population});
  if (on_generation) on_generation(result.snapshots.back());

  for (std::size_t t = 1; t <= config.generations; ++t) {
    const auto parents = truncation_select(population, config.effective_selection_size());
    Rng rng(derive_seed(config.global_seed, {kMutationStream, t}));
    std::vector<Individual> offspring;
    for (std::size_t i = 0; i < config.population_size; ++i) {
      const auto& parent = parents[uniform_int<std::size_t>(rng, 0, parents.size() - 1)];
      offspring.push_back(
          Individual{{t, i}, mutate(parent.descriptor, config.constraints, rng).descriptor, std::nullopt, 0});
    }
    evaluate_all(offspring, evaluator, config.global_seed, config.threads);
    record(offspring);

    population.insert(population.end(), offspring.begin(), offspring.end());
    std::stable_sort(population.begin(), population.end(), fitter);
    population.resize(config.population_size);
    result.snapshots.push_back(GenerationSnapshot{t, population});
    result.best_fitness.push_back(result.snapshots.back().best_fitness());
    if (on_generation) on_generation(result.snapshots.back());
  }
  return result;
}

}  // namespace ncevo
