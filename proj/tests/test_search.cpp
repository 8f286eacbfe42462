#include <cstdlib>

#include <gtest/gtest.h>

#include "fusemap/search.hpp"
#include "test_support.hpp"

namespace fusemap {
namespace {

const Action S = Action::sync();
Action M(Count mb) { return Action::micro_batch(mb); }

SearchOptions toy_options(Bytes budget) {
  SearchOptions o;
  o.batch = 8;
  o.mem_budget = budget;
  o.actions = std::vector<Action>{S, M(2), M(4), M(8)};
  o.threads = 1;
  return o;
}

TEST(Fitness, ValidBeatsInvalidAndTiesBreakOnTraffic) {
  Fitness valid_slow{true, 0, 2.0, 10, 10};
  Fitness valid_fast{true, 0, 1.0, 99, 99};
  Fitness invalid_small{false, 5, 0.5, 1, 1};
  Fitness invalid_big{false, 50, 0.1, 1, 1};
  EXPECT_LT(valid_fast, valid_slow);
  EXPECT_LT(valid_slow, invalid_small);
  EXPECT_LT(invalid_small, invalid_big);
  Fitness same_latency_less_traffic{true, 0, 1.0, 50, 99};
  EXPECT_LT(same_latency_less_traffic, valid_fast);
  EXPECT_FALSE(valid_fast < valid_fast);
}

TEST(GaConfig, DefaultsAndEliteCount) {
  GaConfig cfg;
  EXPECT_EQ(cfg.population, 40);
  EXPECT_EQ(cfg.generations, 50);
  EXPECT_EQ(cfg.elite_count(), 4);
  EXPECT_EQ(cfg.sample_budget(), 2000);
}

TEST(BruteForce, CountsTheWholeSpace) {
  const CostModel model(testing::toy5(), AcceleratorConfig{});
  const auto opt = toy_options(Bytes{1} << 20);
  EXPECT_EQ(search_space_size(5, *opt.actions), 3.0L * 4 * 4 * 4 * 4 * 4);
  const SearchResult r = brute_force(model, opt);
  EXPECT_EQ(r.samples_used, 3 * 1024);
  // No sampled strategy beats the reported optimum.
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    Strategy s{8, {}};
    const std::vector<Action> head{M(2), M(4), M(8)};
    s.actions.push_back(head[rng() % 3]);
    for (int l = 0; l < 5; ++l) s.actions.push_back((*opt.actions)[rng() % 4]);
    EXPECT_FALSE(Fitness::of(model.evaluate(s, opt.mem_budget)) < Fitness::of(r.best_report));
  }
}

TEST(BruteForce, GuardRejectsLargeSpaces) {
  const CostModel model(builtin("vgg16"), AcceleratorConfig{});
  SearchOptions opt;
  opt.batch = 64;
  try {
    brute_force(model, opt);
    FAIL() << "expected SearchSpaceTooLarge";
  } catch (const SearchSpaceTooLarge& e) {
    EXPECT_GT(e.cardinality(), kBruteForceLimit);
    EXPECT_NE(std::string(e.what()).find("strategies"), std::string::npos);
  }
}

TEST(GaSearch, ReachesTheToyOptimum) {
  const CostModel model(testing::toy5(), testing::toy_accel());
  const Bytes base = model.evaluate(no_fusion(model.workload(), 8), 0).peak_onchip;
  for (Bytes budget : {base, 2 * base, Bytes{1} << 30}) {
    const auto opt = toy_options(budget);
    const SearchResult oracle = brute_force(model, opt);
    GaConfig cfg;
    cfg.seed = 3;
    const SearchResult ga = ga_search(model, opt, cfg);
    EXPECT_LE(ga.best_report.latency, oracle.best_report.latency * 1.01) << budget;
    EXPECT_TRUE(oracle.best_report.valid);
    EXPECT_TRUE(ga.best_report.valid);
  }
}

TEST(GaSearch, DeterministicAndIndependentOfThreadCount) {
  const CostModel model(builtin("resnet18"), AcceleratorConfig{});
  SearchOptions opt;
  opt.mem_budget = Bytes{32} << 20;
  opt.threads = 1;
  GaConfig cfg;
  cfg.seed = 9;
  cfg.generations = 10;
  const SearchResult a = ga_search(model, opt, cfg);
  opt.threads = 4;
  const SearchResult b = ga_search(model, opt, cfg);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(search_result_to_json(a, "resnet18"), search_result_to_json(b, "resnet18"));
  EXPECT_EQ(history_to_csv(a), history_to_csv(b));
}

TEST(GaSearch, HistoryNeverRegressesAndBudgetIsRespected) {
  const CostModel model(builtin("vgg16"), AcceleratorConfig{});
  SearchOptions opt;
  opt.mem_budget = Bytes{16} << 20;
  opt.threads = 1;
  GaConfig cfg;
  cfg.seed = 4;
  const SearchResult r = ga_search(model, opt, cfg);
  ASSERT_EQ(r.history.size(), 50u);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_FALSE(r.history[i - 1].best < r.history[i].best);
  EXPECT_LE(r.samples_used, cfg.sample_budget());
  EXPECT_TRUE(r.best_report.valid);
  // The final population is sorted best-first and contains the best.
  EXPECT_EQ(r.final_population.front().strategy, r.best);
  for (std::size_t i = 1; i < r.final_population.size(); ++i) {
    EXPECT_FALSE(r.final_population[i].fitness < r.final_population[i - 1].fitness);
  }
}

TEST(GaSearch, NeverWorseThanItsSeeds) {
  const CostModel model(builtin("mobilenet_v2"), AcceleratorConfig{});
  SearchOptions opt;
  opt.mem_budget = Bytes{48} << 20;
  opt.threads = 1;
  GaConfig cfg;
  cfg.generations = 5;
  const SearchResult r = ga_search(model, opt, cfg);
  const Strategy uniform = uniform_microbatch(model, 64, opt.mem_budget);
  EXPECT_FALSE(Fitness::of(model.evaluate(uniform, opt.mem_budget)) < Fitness::of(r.best_report));
}

TEST(RandomSearch, SingleSampleAndMonotoneHistory) {
  const CostModel model(testing::toy5(), AcceleratorConfig{});
  const auto opt = toy_options(Bytes{1} << 20);
  const SearchResult one = random_search(model, opt, 1, 5);
  EXPECT_EQ(one.samples_used, 1);
  EXPECT_EQ(one.history.size(), 1u);
  const SearchResult many = random_search(model, opt, 300, 5);
  EXPECT_EQ(many.history.front().best, one.history.front().best);
  for (std::size_t i = 1; i < many.history.size(); ++i) EXPECT_FALSE(many.history[i - 1].best < many.history[i].best);
  EXPECT_THROW(random_search(model, opt, 0, 5), std::invalid_argument);
}

TEST(Search, RejectsNonDivisorActions) {
  const CostModel model(testing::toy5(), AcceleratorConfig{});
  auto opt = toy_options(1 << 20);
  opt.actions = std::vector<Action>{S, M(3)};
  EXPECT_THROW(ga_search(model, opt, GaConfig{}), std::invalid_argument);
  opt.actions = std::vector<Action>{S};
  EXPECT_THROW(random_search(model, opt, 10, 0), std::invalid_argument);
}

TEST(TopDistinctValid, SkipsInvalidAndDuplicates) {
  CostReport ok;
  ok.valid = true;
  CostReport bad;
  const Strategy a{8, {M(8), S}}, b{8, {M(4), S}};
  std::vector<Individual> pop{{a, ok, Fitness::of(ok)}, {a, ok, Fitness::of(ok)}, {b, bad, Fitness::of(bad)},
                              {b, ok, Fitness::of(ok)}};
  const auto top = top_distinct_valid(pop, 8);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].strategy, a);
  EXPECT_EQ(top[1].strategy, b);
  EXPECT_EQ(top_distinct_valid(pop, 1).size(), 1u);
}

TEST(ResolveThreads, HonorsEnvironment) {
  EXPECT_EQ(resolve_threads(3), 3);
  setenv("FUSEMAP_THREADS", "2", 1);
  EXPECT_EQ(resolve_threads(0), 2);
  unsetenv("FUSEMAP_THREADS");
  EXPECT_GE(resolve_threads(0), 1);
}

}  // namespace
}  // namespace fusemap
