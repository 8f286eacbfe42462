#include <random>

#include <gtest/gtest.h>

#include "fusemap/cost_model.hpp"
#include "test_support.hpp"

namespace fusemap {
namespace {

const Action S = Action::sync();
Action M(Count mb) { return Action::micro_batch(mb); }
constexpr Bytes kUnlimited = std::numeric_limits<Bytes>::max();

// Hand-costed toy2 at batch 4 on toy_accel (100 MAC/s, 10 B/s off, 100 B/s on).
// Per sample: in1 = 64 B, out1 = 128 B, out2 = 64 B; weights 144 B and 64 B;
// MACs 1152 and 128.
TEST(CostModelOracle, Toy2NoFusion) {
  const CostModel model(testing::toy2(), testing::toy_accel());
  const CostReport r = model.evaluate(no_fusion(model.workload(), 4), kUnlimited);
  ASSERT_EQ(r.per_group.size(), 2u);
  // group 1: off (64+128)*4 + 144 = 912, compute 4608 MACs = 46.08 s
  EXPECT_EQ(r.per_group[0].offchip, 912);
  EXPECT_EQ(r.per_group[0].onchip, 912);
  EXPECT_DOUBLE_EQ(r.per_group[0].t_comp, 46.08);
  EXPECT_DOUBLE_EQ(r.per_group[0].t_off, 91.2);
  EXPECT_EQ(r.per_group[0].peak, 64 * 4 + 128);  // input at mb 4, output stream buffer
  // group 2: off (128+64)*4 + 64 = 832
  EXPECT_EQ(r.per_group[1].offchip, 832);
  EXPECT_EQ(r.per_group[1].peak, 128 + 64);
  EXPECT_EQ(r.offchip_traffic, 1744);
  EXPECT_EQ(r.peak_onchip, 384);
  EXPECT_NEAR(r.latency, 91.2 + 83.2, 1e-12);
  EXPECT_TRUE(r.valid);
}

TEST(CostModelOracle, Toy2FullyFused) {
  const CostModel model(testing::toy2(), testing::toy_accel());
  const Strategy s{4, {M(2), M(2), S}};
  const CostReport r = model.evaluate(s, 656);
  ASSERT_EQ(r.per_group.size(), 1u);
  EXPECT_EQ(r.offchip_traffic, (64 + 64) * 4 + 144 + 64);  // 720
  EXPECT_EQ(r.onchip_traffic, 912 + 832);
  EXPECT_EQ(r.peak_onchip, 64 * 2 + 128 * 2 + 64 + 208);  // 656, weights resident
  EXPECT_NEAR(r.latency, 72.0, 1e-12);
  EXPECT_TRUE(r.valid);
  EXPECT_FALSE(model.evaluate(s, 655).valid);
  EXPECT_NEAR(model.baseline_latency(4) / r.latency, 174.4 / 72.0, 1e-12);
}

// toy3_skip at batch 2: layer c adds layer a's output (128 B/sample).
TEST(CostModelOracle, SkipTensorsCrossingGroups) {
  const CostModel model(testing::toy3_skip(), testing::toy_accel());
  // Separate groups: consumer re-reads the skip tensor.
  EXPECT_EQ(model.evaluate(no_fusion(model.workload(), 2), kUnlimited).offchip_traffic, 528 + 800 + 800);
  // a,b fused: a's output is internal, so it must also be written out.
  const CostReport ab = model.evaluate({2, {M(2), M(1), S, S}}, kUnlimited);
  EXPECT_EQ(ab.per_group[0].offchip, (64 + 128) * 2 + 144 + 288 + 256);
  EXPECT_EQ(ab.per_group[1].offchip, (128 + 128) * 2 + 32 + 256);
  EXPECT_EQ(ab.per_group[0].peak, 64 * 2 + 128 + 128 + 432);
  EXPECT_EQ(ab.per_group[1].peak, 128 + 128 + 128);  // input, output and staged skip
  // all fused: the skip never leaves the chip.
  EXPECT_EQ(model.evaluate({2, {M(2), M(1), M(1), S}}, kUnlimited).offchip_traffic, (64 + 128) * 2 + 464);
}

TEST(CostModel, LatencyIsAtLeastTheComputeFloor) {
  std::mt19937_64 rng(3);
  const CostModel model(builtin("resnet18"), AcceleratorConfig{});
  for (int i = 0; i < 200; ++i) {
    const Strategy s = testing::random_strategy(rng, model.layers(), 64);
    EXPECT_GE(model.evaluate(s, kUnlimited).latency, model.compute_floor(64));
  }
}

TEST(CostModel, NoFusionSpeedupIsExactlyOne) {
  for (const auto& name : builtin_names()) {
    const Workload w = builtin(name);
    EXPECT_EQ(speedup(w, AcceleratorConfig{}, no_fusion(w, 64)), 1.0) << name;
  }
}

TEST(CostModel, PartialPerfPadsWithSync) {
  const CostModel model(testing::toy2(), testing::toy_accel());
  EXPECT_EQ(model.partial_perf({}, 4), model.baseline_latency(4));
  const std::vector<Action> full{M(2), M(2), S};
  EXPECT_EQ(model.partial_perf(full, 4), model.evaluate({4, full}, kUnlimited).latency);
  const std::vector<Action> prefix{M(2), M(2)};
  EXPECT_EQ(model.partial_perf(prefix, 4), model.evaluate({4, {M(2), M(2), S}}, kUnlimited).latency);
  EXPECT_THROW(model.partial_perf(std::vector<Action>(4, M(1)), 4), StrategyError);
}

TEST(CostModel, RejectsIllegalStrategies) {
  const CostModel model(testing::toy2(), testing::toy_accel());
  EXPECT_THROW(model.evaluate({4, {M(4), S}}, kUnlimited), StrategyError);
  EXPECT_THROW(model.evaluate({4, {M(3), S, S}}, kUnlimited), StrategyError);
}

TEST(CostModel, DoubleBufferingDoublesStagedBytes) {
  AcceleratorConfig a = testing::toy_accel();
  a.double_buffer = true;
  const CostModel model(testing::toy2(), a);
  EXPECT_EQ(model.evaluate({4, {M(2), M(2), S}}, kUnlimited).peak_onchip, 2 * (64 * 2 + 128 * 2 + 64) + 208);
}

TEST(AcceleratorConfig, ValidateRejectsNonPositive) {
  AcceleratorConfig a;
  a.pes = 0;
  EXPECT_THROW(a.validate(), ValidationError);
  a = AcceleratorConfig{};
  a.bw_on = 1.0;  // below off-chip bandwidth
  EXPECT_THROW(a.validate(), ValidationError);
}

// Raising any positive micro-batch never lowers the peak.
TEST(CostModelProperty, PeakMonotoneInMicroBatch) {
  std::mt19937_64 rng(17);
  const std::vector<Workload> pool{builtin("resnet18"), builtin("mobilenet_v2"), testing::toy3_skip()};
  for (int trial = 0; trial < 1000; ++trial) {
    const Workload w = trial % 2 ? pool[static_cast<std::size_t>(trial) % pool.size()] : testing::random_chain(rng);
    const CostModel model(w, AcceleratorConfig{});
    const Count batch = 16;
    Strategy s = testing::random_strategy(rng, model.layers(), batch);
    std::vector<std::size_t> positive;
    for (std::size_t i = 0; i < s.actions.size(); ++i) {
      if (!s.actions[i].is_sync() && s.actions[i].micro_batch() < batch) positive.push_back(i);
    }
    if (positive.empty()) continue;
    const std::size_t i = positive[std::uniform_int_distribution<std::size_t>(0, positive.size() - 1)(rng)];
    const Bytes before = model.evaluate(s, kUnlimited).peak_onchip;
    s.actions[i] = M(s.actions[i].micro_batch() * 2);
    EXPECT_GE(model.evaluate(s, kUnlimited).peak_onchip, before) << to_string(s);
  }
}

// Fusing a boundary saves one write and one read of the boundary tensor.
TEST(CostModelProperty, TrafficIdentityOnSkipFreeChains) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    const Workload w = testing::random_chain(rng, 12);
    const CostModel model(w, AcceleratorConfig{});
    const Count batch = std::uniform_int_distribution<Count>(1, 32)(rng);
    const Strategy s = testing::random_strategy(rng, model.layers(), batch);
    Bytes internal = 0;
    for (std::size_t i = 1; i < model.layers(); ++i) {
      if (!s.actions[i].is_sync()) internal += out_activation_bytes(w.layers[i - 1], batch, w.bytes_per_element);
    }
    const Bytes base = model.evaluate(no_fusion(w, batch), kUnlimited).offchip_traffic;
    EXPECT_EQ(model.evaluate(s, kUnlimited).offchip_traffic, base - 2 * internal);
  }
}

TEST(UniformMicrobatch, PicksLargestFittingMicroBatch) {
  Workload w = testing::toy3_skip();
  const CostModel model(w, testing::toy_accel());
  auto uniform_peak = [&](Count mb) {
    Strategy s{8, std::vector<Action>(4, M(mb))};
    return model.evaluate(s, kUnlimited).peak_onchip;
  };
  const Bytes p2 = uniform_peak(2), p4 = uniform_peak(4);
  ASSERT_LT(p2, p4);
  const Strategy s = uniform_microbatch(model, 8, (p2 + p4) / 2);
  EXPECT_EQ(s.actions, std::vector<Action>(4, M(2)));
  EXPECT_EQ(uniform_microbatch(model, 8, Bytes{1} << 40).actions, std::vector<Action>(4, M(8)));
  EXPECT_EQ(uniform_microbatch(model, 8, 1), no_fusion(w, 8));
}

TEST(CostReport, JsonCarriesSpeedupAndGroups) {
  const CostModel model(testing::toy2(), testing::toy_accel());
  const std::string text = report_to_json(model.evaluate({4, {M(2), M(2), S}}, 1000), 2.5);
  EXPECT_NE(text.find("\"speedup\": 2.5"), std::string::npos);
  EXPECT_NE(text.find("\"per_group\""), std::string::npos);
}

}  // namespace
}  // namespace fusemap
