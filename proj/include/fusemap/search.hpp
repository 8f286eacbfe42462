#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fusemap/cost_model.hpp"

namespace fusemap {

/// Lexicographic search objective: feasible beats infeasible; infeasible
/// points compare by budget overshoot; feasible points by latency, then by
/// off-chip traffic and peak memory (latency ties are common because the
/// compute floor dominates many layers).
struct Fitness {
  bool valid = false;
  Bytes overshoot = 0;
  double latency = 0;
  Bytes offchip = 0;
  Bytes peak = 0;

  static Fitness of(const CostReport& report);
  bool operator<(const Fitness& other) const;
  bool operator==(const Fitness&) const = default;
};

struct GaConfig {
  int population = 40;
  int generations = 50;
  double elite_fraction = 0.1;
  double mutation_rate = 0.15;
  double crossover_rate = 0.9;
  int tournament = 3;
  std::uint64_t seed = 0;

  int elite_count() const;
  /// Upper bound on cost-model evaluations.
  long sample_budget() const { return static_cast<long>(population) * generations; }
};

struct SearchOptions {
  Count batch = 64;
  Bytes mem_budget = Bytes{64} << 20;
  /// Restricts every gene to this set (Sync is dropped at index 0).
  std::optional<std::vector<Action>> actions;
  /// 0 = FUSEMAP_THREADS or hardware concurrency.
  int threads = 0;
};

struct Individual {
  Strategy strategy;
  CostReport report;
  Fitness fitness;
};

struct HistoryPoint {
  long step = 0;  // generation (GA) or sample index (random)
  Fitness best;
};

struct SearchResult {
  std::string algorithm;
  Strategy best;
  CostReport best_report;
  std::vector<HistoryPoint> history;
  long samples_used = 0;
  double wall_time = 0;
  /// Final GA population sorted best-first (empty for other algorithms).
  std::vector<Individual> final_population;
};

class SearchSpaceTooLarge : public std::runtime_error {
 public:
  SearchSpaceTooLarge(long double cardinality, long double limit);
  long double cardinality() const { return cardinality_; }

 private:
  long double cardinality_;
};

/// G-Sampler: generational GA over strategy genomes, seeded with no-fusion
/// and the uniform micro-batch baseline. Deterministic given cfg.seed.
SearchResult ga_search(const CostModel& model, const SearchOptions& options, const GaConfig& cfg);

SearchResult random_search(const CostModel& model, const SearchOptions& options, long budget_samples,
                           std::uint64_t seed);

inline constexpr long double kBruteForceLimit = 1e7L;

/// Exhaustive enumeration; throws SearchSpaceTooLarge beyond kBruteForceLimit.
SearchResult brute_force(const CostModel& model, const SearchOptions& options);

long double search_space_size(std::size_t n_layers, const std::vector<Action>& actions);

/// Distinct valid strategies from a sorted population, best first.
std::vector<Individual> top_distinct_valid(const std::vector<Individual>& population, std::size_t k);

int resolve_threads(int requested);

/// Deterministic summary (wall time is left to the run manifest).
std::string search_result_to_json(const SearchResult& result, std::string_view workload_name);
std::string history_to_csv(const SearchResult& result);

}  // namespace fusemap
