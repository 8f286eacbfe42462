#include "fusemap/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace fusemap {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct GeneSpace {
  std::vector<Action> head;  // index 0: micro-batches only
  std::vector<Action> body;

  GeneSpace(const SearchOptions& options) {
    body = options.actions ? *options.actions : action_space(options.batch);
    std::sort(body.begin(), body.end());
    body.erase(std::unique(body.begin(), body.end()), body.end());
    for (Action a : body) {
      if (a.is_sync()) continue;
      if (a.micro_batch() < 1 || options.batch % a.micro_batch() != 0) {
        throw std::invalid_argument("search: action " + std::to_string(a.code()) + " is not a divisor of the batch");
      }
      head.push_back(a);
    }
    if (head.empty()) throw std::invalid_argument("search: action set needs at least one micro-batch");
  }

  bool contains(const Strategy& s) const {
    if (!std::binary_search(head.begin(), head.end(), s.actions[0])) return false;
    for (std::size_t i = 1; i < s.actions.size(); ++i) {
      if (!std::binary_search(body.begin(), body.end(), s.actions[i])) return false;
    }
    return true;
  }

  Action sample(std::size_t position, std::mt19937_64& rng) const {
    const auto& set = position == 0 ? head : body;
    std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
    return set[pick(rng)];
  }

  Strategy random(std::size_t n_layers, Count batch, std::mt19937_64& rng) const {
    Strategy s;
    s.batch = batch;
    s.actions.reserve(n_layers + 1);
    for (std::size_t i = 0; i <= n_layers; ++i) s.actions.push_back(sample(i, rng));
    return s;
  }
};

// Evaluates strategies in parallel; the cost model is pure so results are
// independent of the thread count.
std::vector<Individual> evaluate_all(const CostModel& model, std::vector<Strategy> strategies, Bytes budget,
                                     int threads) {
  std::vector<Individual> out(strategies.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i].strategy = std::move(strategies[i]);
      out[i].report = model.evaluate(out[i].strategy, budget);
      out[i].fitness = Fitness::of(out[i].report);
    }
  };
  const std::size_t n = strategies.size();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    work(0, n);
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  return out;
}

void sort_population(std::vector<Individual>& pop) {
  std::stable_sort(pop.begin(), pop.end(),
                   [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; });
}

const Individual& tournament(const std::vector<Individual>& pop, int size, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  const Individual* best = &pop[pick(rng)];
  for (int i = 1; i < size; ++i) {
    const Individual& other = pop[pick(rng)];
    if (other.fitness < best->fitness) best = &other;
  }
  return *best;
}

}  // namespace

Fitness Fitness::of(const CostReport& r) {
  Fitness f;
  f.valid = r.valid;
  f.overshoot = r.valid ? 0 : r.peak_onchip - r.mem_budget;
  f.latency = r.latency;
  f.offchip = r.offchip_traffic;
  f.peak = r.peak_onchip;
  return f;
}

bool Fitness::operator<(const Fitness& o) const {
  if (valid != o.valid) return valid;
  if (!valid && overshoot != o.overshoot) return overshoot < o.overshoot;
  if (latency != o.latency) return latency < o.latency;
  if (offchip != o.offchip) return offchip < o.offchip;
  return peak < o.peak;
}

int GaConfig::elite_count() const {
  return std::clamp(static_cast<int>(std::ceil(elite_fraction * population - 1e-9)), 1, population);
}

SearchSpaceTooLarge::SearchSpaceTooLarge(long double cardinality, long double limit)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "search space too large for brute force: " << static_cast<double>(cardinality) << " strategies (limit "
           << static_cast<double>(limit) << ")";
        return os.str();
      }()),
      cardinality_(cardinality) {}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FUSEMAP_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SearchResult ga_search(const CostModel& model, const SearchOptions& options, const GaConfig& cfg) {
  const auto start = Clock::now();
  if (cfg.population < 2 || cfg.generations < 1) throw std::invalid_argument("ga_search: population >= 2 and generations >= 1 required");
  const GeneSpace genes(options);
  const std::size_t n = model.layers();
  const int threads = resolve_threads(options.threads);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::vector<Strategy> seeds;
  for (Strategy s : {no_fusion(model.workload(), options.batch),
                     uniform_microbatch(model, options.batch, options.mem_budget)}) {
    if (genes.contains(s) && std::find(seeds.begin(), seeds.end(), s) == seeds.end()) seeds.push_back(std::move(s));
  }
  while (seeds.size() < static_cast<std::size_t>(cfg.population)) seeds.push_back(genes.random(n, options.batch, rng));
  seeds.resize(cfg.population);

  SearchResult result;
  result.algorithm = "ga";
  std::vector<Individual> pop = evaluate_all(model, std::move(seeds), options.mem_budget, threads);
  result.samples_used = static_cast<long>(pop.size());
  sort_population(pop);
  Individual best = pop.front();
  result.history.push_back({0, best.fitness});

  const int elites = cfg.elite_count();
  for (int gen = 1; gen < cfg.generations; ++gen) {
    std::vector<Strategy> children;
    children.reserve(cfg.population - elites);
    while (static_cast<int>(children.size()) < cfg.population - elites) {
      Strategy a = tournament(pop, cfg.tournament, rng).strategy;
      const Strategy& b = tournament(pop, cfg.tournament, rng).strategy;
      if (n >= 1 && coin(rng) < cfg.crossover_rate) {
        std::uniform_int_distribution<std::size_t> cut(1, n);
        const std::size_t c = cut(rng);
        std::copy(b.actions.begin() + static_cast<std::ptrdiff_t>(c), b.actions.end(),
                  a.actions.begin() + static_cast<std::ptrdiff_t>(c));
      }
      for (std::size_t i = 0; i <= n; ++i) {
        if (coin(rng) < cfg.mutation_rate) a.actions[i] = genes.sample(i, rng);
      }
      children.push_back(std::move(a));
    }
    std::vector<Individual> evaluated = evaluate_all(model, std::move(children), options.mem_budget, threads);
    result.samples_used += static_cast<long>(evaluated.size());
    pop.resize(elites);
    std::move(evaluated.begin(), evaluated.end(), std::back_inserter(pop));
    sort_population(pop);
    if (pop.front().fitness < best.fitness) best = pop.front();
    result.history.push_back({gen, best.fitness});
  }

  result.best = best.strategy;
  result.best_report = best.report;
  result.final_population = std::move(pop);
  result.wall_time = seconds_since(start);
  return result;
}

SearchResult random_search(const CostModel& model, const SearchOptions& options, long budget_samples,
                           std::uint64_t seed) {
  const auto start = Clock::now();
  if (budget_samples < 1) throw std::invalid_argument("random_search: budget_samples must be >= 1");
  const GeneSpace genes(options);
  std::mt19937_64 rng(seed);
  SearchResult result;
  result.algorithm = "random";
  std::optional<Individual> best;
  for (long i = 0; i < budget_samples; ++i) {
    Individual ind;
    ind.strategy = genes.random(model.layers(), options.batch, rng);
    ind.report = model.evaluate(ind.strategy, options.mem_budget);
    ind.fitness = Fitness::of(ind.report);
    if (!best || ind.fitness < best->fitness) best = std::move(ind);
    result.history.push_back({i, best->fitness});
  }
  result.samples_used = budget_samples;
  result.best = best->strategy;
  result.best_report = best->report;
  result.wall_time = seconds_since(start);
  return result;
}

long double search_space_size(std::size_t n_layers, const std::vector<Action>& actions) {
  const long double syncs = static_cast<long double>(std::count_if(actions.begin(), actions.end(), [](Action a) { return a.is_sync(); }));
  const long double total = static_cast<long double>(actions.size());
  return (total - syncs) * std::pow(total, static_cast<long double>(n_layers));
}

SearchResult brute_force(const CostModel& model, const SearchOptions& options) {
  const auto start = Clock::now();
  const GeneSpace genes(options);
  const std::size_t n = model.layers();
  const long double cardinality = search_space_size(n, genes.body);
  if (cardinality > kBruteForceLimit) throw SearchSpaceTooLarge(cardinality, kBruteForceLimit);

  SearchResult result;
  result.algorithm = "brute";
  std::vector<std::size_t> digit(n + 1, 0);
  Strategy s;
  s.batch = options.batch;
  s.actions.assign(n + 1, Action::sync());
  std::optional<Individual> best;
  for (;;) {
    s.actions[0] = genes.head[digit[0]];
    for (std::size_t i = 1; i <= n; ++i) s.actions[i] = genes.body[digit[i]];
    CostReport report = model.evaluate(s, options.mem_budget);
    const Fitness f = Fitness::of(report);
    ++result.samples_used;
    if (!best || f < best->fitness) best = Individual{s, std::move(report), f};
    // Odometer increment, position 0 fastest.
    std::size_t pos = 0;
    while (pos <= n) {
      const std::size_t radix = pos == 0 ? genes.head.size() : genes.body.size();
      if (++digit[pos] < radix) break;
      digit[pos++] = 0;
    }
    if (pos > n) break;
  }
  result.best = best->strategy;
  result.best_report = best->report;
  result.history.push_back({result.samples_used, best->fitness});
  result.wall_time = seconds_since(start);
  return result;
}

std::vector<Individual> top_distinct_valid(const std::vector<Individual>& population, std::size_t k) {
  std::vector<Individual> out;
  for (const auto& ind : population) {
    if (out.size() >= k) break;
    if (!ind.fitness.valid) continue;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const Individual& o) { return o.strategy == ind.strategy; });
    if (!seen) out.push_back(ind);
  }
  return out;
}

std::string search_result_to_json(const SearchResult& r, std::string_view workload_name) {
  nlohmann::json actions = nlohmann::json::array();
  for (Action a : r.best.actions) actions.push_back(a.code());
  nlohmann::json doc = {
      {"algorithm", r.algorithm},
      {"workload", std::string(workload_name)},
      {"batch", r.best.batch},
      {"best", {{"actions", actions}}},
      {"best_report", nlohmann::json::parse(report_to_json(r.best_report, 0.0, -1))},
      {"samples_used", r.samples_used},
  };
  doc["best_report"].erase("speedup");
  return doc.dump(2) + "\n";
}

std::string history_to_csv(const SearchResult& r) {
  std::ostringstream os;
  os.precision(17);
  os << "step,best_latency,best_peak,best_valid\n";
  for (const auto& h : r.history) {
    os << h.step << ',' << h.best.latency << ',' << h.best.peak << ',' << (h.best.valid ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace fusemap
