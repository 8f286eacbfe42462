#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fusemap/trajectory.hpp"
#include "test_support.hpp"

namespace fusemap::seq {
namespace {

constexpr Bytes MiB = Bytes{1} << 20;

TEST(StateVector, InputPseudoLayerAndFeatures) {
  const CostModel model(builtin("vgg16"), AcceleratorConfig{});
  const StateEncoding enc;
  const StateVector s0 = state_vector(model, 0, 64, 32 * MiB, 1.0, enc);
  EXPECT_DOUBLE_EQ(s0(0), std::log2(3.0) / 16);
  EXPECT_DOUBLE_EQ(s0(1), std::log2(3.0) / 16);
  EXPECT_DOUBLE_EQ(s0(2), std::log2(224.0) / 16);
  EXPECT_DOUBLE_EQ(s0(4), 0.0);
  EXPECT_DOUBLE_EQ(s0(5), 0.0);
  // 32 MiB over 64 samples is half a MiB per sample, over the scale of 64.
  EXPECT_DOUBLE_EQ(s0(6), 0.5 / 64);
  EXPECT_DOUBLE_EQ(s0(7), 1.0);
  const StateVector s1 = state_vector(model, 1, 64, 32 * MiB, 0.5, enc);
  EXPECT_DOUBLE_EQ(s1(0), std::log2(64.0) / 16);
  EXPECT_DOUBLE_EQ(s1(4), std::log2(3.0) / 16);
  EXPECT_THROW(state_vector(model, 17, 64, MiB, 1.0, enc), std::out_of_range);
  EXPECT_DOUBLE_EQ(enc.memory_feature(Bytes{1} << 40, 1), 2.0);  // clamped
}

TEST(Trajectory, NoFusionHasUnitPartialPerformance) {
  const CostModel model(builtin("resnet18"), AcceleratorConfig{});
  const Trajectory t = build_trajectory(model, no_fusion(model.workload(), 64), 32 * MiB);
  ASSERT_EQ(t.steps.size(), 19u);
  for (const auto& step : t.steps) {
    EXPECT_EQ(step.state(7), 1.0);
    EXPECT_EQ(step.reward, 0.5);
  }
  EXPECT_EQ(t.steps[0].action, 1.0);
  EXPECT_EQ(t.steps[1].action, -1.0);
  EXPECT_EQ(t.meta.batch, 64);
  EXPECT_EQ(t.meta.budget_bytes, 32 * MiB);
}

TEST(Trajectory, FinalPartialPerformanceIsTheNormalizedLatency) {
  std::mt19937_64 rng(2);
  for (const auto& name : {"resnet18", "mobilenet_v2"}) {
    const CostModel model(builtin(name), AcceleratorConfig{});
    for (int i = 0; i < 50; ++i) {
      const Strategy s = testing::random_strategy(rng, model.layers(), 64);
      const Trajectory t = build_trajectory(model, s, 32 * MiB);
      EXPECT_EQ(t.steps.back().state(7), model.evaluate(s, 32 * MiB).latency / model.baseline_latency(64));
    }
  }
  // Same on a memory-bound toy where fusion actually changes latency.
  const CostModel toy(testing::toy2(), testing::toy_accel());
  const Strategy fused{4, {Action::micro_batch(2), Action::micro_batch(2), Action::sync()}};
  const Trajectory t = build_trajectory(toy, fused, 1000);
  EXPECT_EQ(t.steps.back().state(7), toy.evaluate(fused, 1000).latency / toy.baseline_latency(4));
  EXPECT_NEAR(t.steps.back().state(7), 72.0 / 174.4, 1e-12);
}

// Fusing one more boundary never raises the latency of the decided prefix.
TEST(TrajectoryProperty, PartialPerformanceWeaklyDecreasesAndStaysInUnitInterval) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const Workload w = trial % 3 ? testing::random_chain(rng, 10) : builtin("resnet18");
    const CostModel model(w, trial % 2 ? testing::toy_accel() : AcceleratorConfig{});
    const Strategy s = testing::random_strategy(rng, model.layers(), 16);
    const Trajectory t = build_trajectory(model, s, MiB);
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      EXPECT_GT(t.steps[i].state(7), 0.0);
      EXPECT_LE(t.steps[i].state(7), 1.0 + 1e-12);
      if (i > 0) EXPECT_LE(t.steps[i].state(7), t.steps[i - 1].state(7) + 1e-12);
    }
  }
}

TEST(Trajectory, JsonLinesRoundTripExactly) {
  std::mt19937_64 rng(4);
  const CostModel model(builtin("vgg16"), AcceleratorConfig{});
  std::vector<Trajectory> ds;
  for (int i = 0; i < 3; ++i) ds.push_back(build_trajectory(model, testing::random_strategy(rng, 16, 64), 48 * MiB));
  std::stringstream buf;
  write_dataset(buf, ds);
  const auto back = read_dataset(buf);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].meta.workload, "vgg16");
    EXPECT_EQ(back[i].meta.latency, ds[i].meta.latency);
    ASSERT_EQ(back[i].steps.size(), ds[i].steps.size());
    for (std::size_t t = 0; t < ds[i].steps.size(); ++t) {
      EXPECT_EQ(back[i].steps[t].state, ds[i].steps[t].state);
      EXPECT_EQ(back[i].steps[t].action, ds[i].steps[t].action);
      EXPECT_EQ(back[i].steps[t].reward, ds[i].steps[t].reward);
    }
  }
}

TEST(Trajectory, MalformedLinesReportTheLineNumber) {
  std::stringstream buf;
  const CostModel model(testing::toy2(), testing::toy_accel());
  buf << trajectory_to_json(build_trajectory(model, no_fusion(model.workload(), 4), 1000)) << "\n\n{\"oops\":1}\n";
  try {
    read_dataset(buf);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(GenDataset, TopOneIsTheSearchBest) {
  const CostModel model(testing::toy5(), testing::toy_accel());
  DatasetOptions o;
  o.batch = 8;
  o.budgets = {Bytes{1} << 30};
  o.top_k = 1;
  o.threads = 1;
  o.ga.seed = 5;
  const auto ds = gen_dataset(model, o);
  ASSERT_EQ(ds.trajectories.size(), 1u);
  SearchOptions so;
  so.batch = 8;
  so.mem_budget = o.budgets[0];
  so.threads = 1;
  const SearchResult best = ga_search(model, so, o.ga);
  EXPECT_EQ(ds.trajectories[0].meta.latency, best.best_report.latency);
  for (std::size_t t = 0; t < best.best.actions.size(); ++t) {
    EXPECT_EQ(ds.trajectories[0].steps[t].action, encode_action(best.best.actions[t], 8));
  }
}

TEST(GenDataset, SkipsImpossibleBudgetsWithAWarning) {
  const CostModel model(testing::toy5(), AcceleratorConfig{});
  DatasetOptions o;
  o.batch = 8;
  o.budgets = {1024, Bytes{1} << 30};
  o.top_k = 4;
  o.threads = 1;
  o.ga.generations = 5;
  std::vector<std::string> warnings;
  const auto ds = gen_dataset(model, o, [&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(ds.skipped_budgets, std::vector<Bytes>{1024});
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_LE(ds.trajectories.size(), 4u);
  EXPECT_GE(ds.trajectories.size(), 1u);
  for (const auto& t : ds.trajectories) EXPECT_EQ(t.meta.budget_bytes, Bytes{1} << 30);
  o.budgets.clear();
  EXPECT_THROW(gen_dataset(model, o), std::invalid_argument);
}

}  // namespace
}  // namespace fusemap::seq
