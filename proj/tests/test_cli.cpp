#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fusemap/checkpoint.hpp"
#include "fusemap/cli.hpp"
#include "fusemap/hash.hpp"
#include "fusemap/strategy.hpp"
#include "test_support.hpp"

namespace fusemap {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "fusemap");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fusemap_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    toy_ = (dir_ / "toy5.json").string();
    std::ofstream(toy_) << workload_to_json(testing::toy5());
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::string toy_;
};

TEST_F(Cli, ZooListTextAndJson) {
  const Result text = run({"zoo-list"});
  EXPECT_EQ(text.code, 0);
  EXPECT_NE(text.out.find("resnet50"), std::string::npos);
  const json doc = json::parse(run({"zoo-list", "--json"}).out);
  ASSERT_EQ(doc.size(), 5u);
  EXPECT_EQ(doc[0]["name"], "vgg16");
  EXPECT_EQ(doc[0]["layers"], 16);
}

TEST_F(Cli, EvalExitCodeTracksValidity) {
  const Result ok = run({"eval", "builtin:vgg16", "no_fusion", "--budget", "64MiB", "--out", path("eval")});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(json::parse(ok.out)["speedup"], 1.0);
  EXPECT_TRUE(fs::exists(path("eval/report.json")));
  const json manifest = json::parse(slurp(path("eval/manifest.json")));
  EXPECT_EQ(manifest["command"], "eval");
  EXPECT_EQ(manifest["inputs"][0]["name"], "builtin:vgg16");
  EXPECT_EQ(manifest["inputs"][0]["sha256"], sha256_hex(workload_to_json(builtin("vgg16"))));

  const Result tight = run({"eval", "vgg16", "no_fusion", "--budget", "1KiB"});
  EXPECT_EQ(tight.code, 2);
  EXPECT_FALSE(json::parse(tight.out)["valid"]);
}

TEST_F(Cli, EvalReadsStrategyFiles) {
  std::ofstream(path("s.json")) << strategy_to_json(Strategy{8, {Action::micro_batch(8), Action::micro_batch(4),
                                                                  Action::sync(), Action::sync(), Action::micro_batch(2),
                                                                  Action::sync()}},
                                                    "toy5");
  const Result r = run({"eval", toy_, path("s.json"), "--budget", "1GiB", "--out", path("e")});
  EXPECT_EQ(r.code, 0) << r.err;
  const json manifest = json::parse(slurp(path("e/manifest.json")));
  EXPECT_EQ(manifest["inputs"][1]["sha256"], sha256_file(path("s.json")));
  EXPECT_EQ(run({"eval", toy_, path("s.json"), "--batch", "4"}).code, 1);
}

TEST_F(Cli, SearchIsByteIdenticalAcrossRuns) {
  const std::vector<std::string> base{"search", toy_, "--batch", "8", "--budget", "1MiB", "--seed", "3",
                                      "--generations", "10", "--threads", "1"};
  auto a_args = base, b_args = base;
  a_args.insert(a_args.end(), {"--out", path("a")});
  b_args.insert(b_args.end(), {"--out", path("b")});
  const Result a = run(a_args), b = run(b_args);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  for (const auto* f : {"strategy.json", "result.json", "history.csv"}) {
    EXPECT_EQ(slurp(path("a/") + f), slurp(path("b/") + f)) << f;
  }
  EXPECT_NO_THROW(load_strategy(path("a/strategy.json")));
  const json manifest = json::parse(slurp(path("a/manifest.json")));
  EXPECT_EQ(manifest["seeds"]["search"], 3);
  EXPECT_EQ(manifest["config"]["ga"]["generations"], 10);
  EXPECT_TRUE(manifest.contains("wall_time"));
}

TEST_F(Cli, BruteForceGuardAndRandomSearch) {
  const Result big = run({"search", "vgg16", "--algo", "brute", "--out", path("x")});
  EXPECT_EQ(big.code, 1);
  EXPECT_NE(big.err.find("error:"), std::string::npos);
  const Result brute = run({"search", toy_, "--algo", "brute", "--batch", "8", "--actions", "sync,2,4,8", "--out", path("bf")});
  EXPECT_EQ(brute.code, 0) << brute.err;
  const Result rnd = run({"search", toy_, "--algo", "random", "--batch", "8", "--samples", "50", "--out", path("r")});
  EXPECT_EQ(rnd.code, 0) << rnd.err;
  EXPECT_EQ(json::parse(slurp(path("r/result.json")))["samples_used"], 50);
}

TEST_F(Cli, PipelineFromDatasetToCompare) {
  Result r = run({"dataset", toy_, "--batch", "8", "--budgets", "256KiB,1MiB", "--top-k", "2", "--generations", "5",
                  "--threads", "1", "--out", path("ds")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"train", path("ds/dataset.jsonl"), "--epochs", "5", "--dim", "16", "--blocks", "1", "--max-timesteps", "8",
           "--log-every", "0", "--out", path("tr")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string loss = slurp(path("tr/loss.csv"));
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 7);  // header, epoch 0, five epochs
  const auto ck = seq::load_checkpoint(path("tr/model.dnfz"));
  EXPECT_EQ(ck.config.dim, 16);
  EXPECT_EQ(ck.metadata.epochs, 5);

  r = run({"infer", path("tr/model.dnfz"), toy_, "--batch", "8", "--budget", "512KiB", "--out", path("inf")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mapper wall-time"), std::string::npos);
  EXPECT_EQ(r.err, "");
  const auto [s, name] = load_strategy(path("inf/strategy.json"));
  EXPECT_NO_THROW(check_legal(s, 5));

  r = run({"infer", path("tr/model.dnfz"), toy_, "--batch", "8", "--budget", "4MiB", "--out", path("inf2")});
  EXPECT_NE(r.err.find("outside the trained range"), std::string::npos);
  r = run({"infer", path("tr/model.dnfz"), toy_, "--batch", "4", "--budget", "512KiB", "--out", path("inf3")});
  EXPECT_NE(r.err.find("trained at batch 8"), std::string::npos);
  EXPECT_EQ(run({"infer", path("tr/model.dnfz"), "resnet50", "--out", path("inf4")}).code, 1);

  r = run({"finetune", path("tr/model.dnfz"), path("ds/dataset.jsonl"), "--epoch-fraction", "0.4", "--log-every", "0",
           "--out", path("ft")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto child = seq::load_checkpoint(path("ft/model.dnfz"));
  ASSERT_TRUE(child.metadata.lineage);
  EXPECT_EQ(child.metadata.lineage->parent_sha256, sha256_file(path("tr/model.dnfz")));
  EXPECT_EQ(child.metadata.epochs, 2);

  r = run({"compare", toy_, "--checkpoint", path("tr/model.dnfz"), "--batch", "8", "--budget", "512KiB",
           "--generations", "5", "--threads", "1", "--out", path("cmp")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(path("cmp/compare.csv"));
  for (const auto* m : {"no_fusion,", "uniform,", "random,", "ga,", "model,"}) EXPECT_NE(csv.find(m), std::string::npos) << m;
}

TEST_F(Cli, GradCheckCommand) {
  const Result r = run({"grad-check", "--seeds", "2"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gradient check passed"), std::string::npos);
  EXPECT_EQ(run({"grad-check", "--seeds", "1", "--zero-input"}).code, 0);
}

TEST_F(Cli, ErrorsAreReportedNotThrown) {
  Result r = run({"eval", "alexnet", "no_fusion"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  r = run({"eval", "vgg16", "no_fusion", "--budget", "lots"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("lots"), std::string::npos);
  EXPECT_EQ(run({"search", "vgg16", "--algo", "annealing"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"train", path("missing.jsonl"), "--out", path("t")}).code, 1);
  std::ofstream(path("empty.jsonl")) << "";
  r = run({"train", path("empty.jsonl"), "--out", path("t")});
  EXPECT_NE(r.err.find("empty dataset"), std::string::npos);
}

}  // namespace
}  // namespace fusemap
