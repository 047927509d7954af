#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncevo/descriptor.hpp"
#include "ncevo/fitness.hpp"
#include "ncevo/random.hpp"

namespace ncevo {

struct GAConfig {
  std::size_t population_size = 20;
  std::size_t generations = 30;
  std::size_t selection_size = 0;     // 0 selects population_size / 2
  double crossover_probability = 0.0;  // no crossover operator exists; must stay 0
  SearchConstraints constraints;
  std::uint64_t global_seed = 0;
  std::size_t threads = 1;            // fitness evaluations in flight per generation

  void check() const;
  std::size_t effective_selection_size() const noexcept;
};

/// (generation of birth, index within that generation). Lexicographic order
/// puts older individuals first.
struct IndividualId {
  std::size_t generation = 0;
  std::size_t index = 0;

  friend auto operator<=>(const IndividualId&, const IndividualId&) = default;
};

struct Individual {
  IndividualId id;
  NetworkDescriptor descriptor;
  std::optional<FitnessValue> fitness;
  std::size_t evaluation = 0;  // 1-based position in evaluation order

  double fitness_or_throw() const;
};

enum class MutationOp : std::uint8_t { layer_change, add_layer, del_layer, activ_change, weight_change };

inline constexpr std::array<MutationOp, 5> kMutationOps = {
    MutationOp::layer_change, MutationOp::add_layer, MutationOp::del_layer, MutationOp::activ_change,
    MutationOp::weight_change};

std::string_view to_string(MutationOp op);

// Each operator returns nullopt when it cannot apply at the current depth.
std::optional<NetworkDescriptor> layer_change(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng);
std::optional<NetworkDescriptor> add_layer(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng);
std::optional<NetworkDescriptor> del_layer(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng);
std::optional<NetworkDescriptor> activ_change(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng);
std::optional<NetworkDescriptor> weight_change(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng);

std::optional<NetworkDescriptor> apply_mutation(MutationOp op, const NetworkDescriptor& d,
                                                const SearchConstraints& c, Rng& rng);

struct Mutation {
  NetworkDescriptor descriptor;
  MutationOp op;
  std::size_t redraws = 0;  // inapplicable operators drawn before `op`
};

/// Draws an operator uniformly, redrawing while the drawn one is inapplicable.
Mutation mutate(const NetworkDescriptor& d, const SearchConstraints& c, Rng& rng);

/// Best-first order: higher fitness, then lower id.
bool fitter(const Individual& a, const Individual& b);

/// The q fittest individuals, best first. Throws when one is unevaluated.
std::vector<Individual> truncation_select(std::span<const Individual> population, std::size_t q);

using FitnessEvaluator = std::function<FitnessValue(const NetworkDescriptor&, std::uint64_t seed)>;

struct GenerationSnapshot {
  std::size_t generation = 0;
  std::vector<Individual> population;  // best first

  double best_fitness() const;
  double mean_fitness() const;
};

struct EvolutionResult {
  /// snapshots[0] is the evaluated initial population, snapshots[t] the
  /// population after generation t.
  std::vector<GenerationSnapshot> snapshots;
  std::vector<double> best_fitness;  // one per generation, after replacement
  std::vector<Individual> evaluated;  // every evaluation, in order

  const std::vector<Individual>& final_population() const { return snapshots.back().population; }
  std::size_t evaluations() const noexcept { return evaluated.size(); }
};

/// `generation N best=... mean=... descriptor=...`
std::string format_generation_log(const GenerationSnapshot& snapshot);

/// The seed handed to the evaluator for an individual.
std::uint64_t individual_seed(std::uint64_t global_seed, const IndividualId& id) noexcept;

using GenerationCallback = std::function<void(const GenerationSnapshot&)>;

/// Generational (mu + lambda) GA with truncation selection and mutation only.
EvolutionResult evolve(const GAConfig& config, const FitnessEvaluator& evaluator,
                       const GenerationCallback& on_generation = {});

}  // namespace ncevo
