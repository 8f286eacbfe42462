#include <random>

#include <gtest/gtest.h>

#include "fusemap/strategy.hpp"
#include "test_support.hpp"

namespace fusemap {
namespace {

const Action S = Action::sync();
Action M(Count mb) { return Action::micro_batch(mb); }

TEST(ActionSpace, Batch64HasSyncAndSevenDivisors) {
  const auto space = action_space(64);
  ASSERT_EQ(space.size(), 8u);
  EXPECT_TRUE(space.front().is_sync());
  EXPECT_EQ(space[1], M(1));
  EXPECT_EQ(space.back(), M(64));
}

TEST(ActionSpace, CapsAtSixtyThreeDivisors) {
  // 720720 has 240 divisors; the largest 63 are kept plus Sync.
  const auto space = action_space(720720);
  EXPECT_EQ(space.size(), 64u);
  EXPECT_EQ(space.back(), M(720720));
  EXPECT_TRUE(std::is_sorted(space.begin(), space.end()));
}

TEST(ActionSpace, AlwaysContainsSyncOneAndBatch) {
  for (Count b = 1; b <= 200; ++b) {
    const auto space = action_space(b);
    EXPECT_TRUE(std::find(space.begin(), space.end(), S) != space.end());
    EXPECT_TRUE(std::find(space.begin(), space.end(), M(b)) != space.end());
    if (space.size() < 64) EXPECT_TRUE(std::find(space.begin(), space.end(), M(1)) != space.end());
  }
}

TEST(Legalize, SpecExamples) {
  const std::vector<double> a{-1.0, -1.0};
  EXPECT_EQ(legalize(a, 8).actions, (std::vector<Action>{M(1), S}));
  const std::vector<double> b{1.0, 0.5};
  EXPECT_EQ(legalize(b, 8).actions, (std::vector<Action>{M(8), M(4)}));
  const std::vector<double> c{0.4, 0.3};
  EXPECT_EQ(legalize(c, 8).actions, (std::vector<Action>{M(4), M(2)}));
}

TEST(Legalize, TiesGoToTheSmallerDivisor) {
  // batch 8: 0.375 * 8 = 3 is equidistant from 2 and 4.
  EXPECT_EQ(decode_action(0.375, 8, true), M(2));
  EXPECT_EQ(decode_action(-0.49, 8, true), M(1));
  EXPECT_EQ(decode_action(-0.5, 8, true), S);
  EXPECT_EQ(decode_action(-0.5, 8, false), M(1));
}

TEST(Legalize, EncodeDecodeIsAFixedPoint) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Count batch = std::uniform_int_distribution<Count>(1, 128)(rng);
    std::vector<double> raw(1 + trial % 20);
    for (double& v : raw) v = u(rng);
    const Strategy s = legalize(raw, batch);
    ASSERT_NO_THROW(check_legal(s, raw.size() - 1));
    const auto enc = encode(s);
    EXPECT_EQ(legalize(enc, batch), s);
  }
}

TEST(CheckLegal, RejectsMalformedStrategies) {
  Strategy s{8, {M(8), S, M(4)}};
  EXPECT_NO_THROW(check_legal(s, 2));
  EXPECT_THROW(check_legal(s, 3), StrategyError);
  s.actions[0] = S;
  EXPECT_THROW(check_legal(s, 2), StrategyError);
  s.actions[0] = M(3);
  EXPECT_THROW(check_legal(s, 2), StrategyError);
  s.actions[0] = M(16);
  EXPECT_THROW(check_legal(s, 2), StrategyError);
}

TEST(Groups, SplitAtSyncs) {
  const Strategy s{4, {M(4), M(2), S, M(1), M(1), S}};
  const auto g = groups(s, 5);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].first_layer, 1u);
  EXPECT_EQ(g[0].last_layer, 2u);
  EXPECT_EQ(g[0].staging, (std::vector<Count>{2, 1}));
  EXPECT_EQ(g[1].first_layer, 3u);
  EXPECT_EQ(g[1].last_layer, 5u);
}

TEST(Groups, TileTheLayerRangeForRandomStrategies) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + trial % 30;
    const Strategy s = testing::random_strategy(rng, n, 16);
    const auto g = groups(s, n);
    std::size_t next = 1;
    for (const auto& grp : g) {
      EXPECT_EQ(grp.first_layer, next);
      EXPECT_GE(grp.last_layer, grp.first_layer);
      EXPECT_EQ(grp.staging.size(), grp.size());
      next = grp.last_layer + 1;
    }
    EXPECT_EQ(next, n + 1);
  }
}

TEST(NoFusion, HasExactlyNSyncs) {
  for (const auto& name : builtin_names()) {
    const Workload w = builtin(name);
    const Strategy s = no_fusion(w, 64);
    EXPECT_EQ(std::count(s.actions.begin(), s.actions.end(), S), static_cast<long>(w.size()));
    EXPECT_EQ(s.actions[0], M(64));
    EXPECT_EQ(groups(s, w.size()).size(), w.size());
  }
}

TEST(StrategyJson, RoundTripsAndRejectsUnknownFields) {
  const Strategy s{8, {M(8), S, M(4), M(1)}};
  const auto [back, name] = parse_strategy(strategy_to_json(s, "toy"));
  EXPECT_EQ(back, s);
  EXPECT_EQ(name, "toy");
  EXPECT_THROW(parse_strategy(R"({"workload":"t","batch":8,"actions":[8],"x":1})"), ParseError);
  EXPECT_THROW(parse_strategy(R"({"workload":"t","batch":8,"actions":[0]})"), ParseError);
  EXPECT_THROW(parse_strategy(R"({"workload":"t","actions":[8]})"), ParseError);
  EXPECT_EQ(to_string(s), "[8, S, 4, 1]");
}

}  // namespace
}  // namespace fusemap
