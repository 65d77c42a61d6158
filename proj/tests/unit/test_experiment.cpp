#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "regretlab/csv.hpp"
#include "regretlab/error.hpp"
#include "regretlab/experiment.hpp"

using namespace regretlab;
using namespace regretlab::experiment;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json fig1_config() {
  return json::parse(R"({
    "kind": "fig1_stability",
    "system": {"preset": "exampledynamics"},
    "weights": {"Q": 0.001, "R": 1},
    "trials": 2
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("regretlab_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, CommentsAreStripped) {
  const auto j = parse_config_text("// head\n{\"a\": \"x//y\", /* b */ \"b\": 1}\n");
  EXPECT_EQ(j.at("a"), "x//y");
  EXPECT_EQ(j.at("b"), 1);
  EXPECT_THROW(parse_config_text("{\"a\": }"), Error);
}

TEST(Config, ValidPresetHasNoDiagnostics) {
  EXPECT_TRUE(validate_config(fig1_config()).empty());
  const auto cfg = parse_config(fig1_config());
  EXPECT_EQ(cfg.kind, Kind::kFig1Stability);
  EXPECT_EQ(cfg.weights.Q(1, 1), 0.001);
  EXPECT_EQ(cfg.system.nx(), 3);
}

TEST(Config, NegativeEigenvalueInQ) {
  auto j = fig1_config();
  j["weights"]["Q"] = json::parse("[[1,0,0],[0,-1,0],[0,0,1]]");
  const auto d = validate_config(j);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].path, "/weights/Q");
  EXPECT_NE(d[0].message.find("LqrWeights.Q"), std::string::npos);
}

TEST(Config, UnknownPreset) {
  auto j = fig1_config();
  j["system"]["preset"] = "cartpole";
  const auto d = validate_config(j);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].path, "/system/preset");
}

TEST(Config, TrialCount) {
  auto j = fig1_config();
  j["trials"] = 0;
  ASSERT_EQ(validate_config(j).size(), 1u);
  EXPECT_EQ(validate_config(j)[0].path, "/trials");
  j.erase("trials");
  EXPECT_EQ(validate_config(j).size(), 1u);
  try {
    parse_config(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(Config, UnknownKeysAndBadParams) {
  auto j = fig1_config();
  j["colour"] = "red";
  j["params"] = json::parse(R"({"n_grid": [], "eps_source": "guess", "sls": {"alpha": 2}})");
  const auto d = validate_config(j);
  std::vector<std::string> paths;
  for (const auto& x : d) paths.push_back(x.path);
  const std::vector<std::string> want{"/colour", "/params/n_grid", "/params/eps_source",
                                      "/params/sls/alpha"};
  EXPECT_EQ(paths, want);
}

TEST(Config, InlineSystemAndMdp) {
  auto j = json::parse(R"({
    "kind": "custom", "trials": 1,
    "system": {"A": [[0.5, 0.1], [0, 0.9]], "B": [[0], [1]], "sigma_w": 0.5},
    "weights": {"Q": [[1, 0], [0, 2]], "R": 3}
  })");
  const auto cfg = parse_config(j);
  EXPECT_EQ(cfg.system.nu(), 1);
  EXPECT_EQ(cfg.weights.R(0, 0), 3.0);
  j["system"]["B"] = json::parse("[[0, 1, 2]]");
  EXPECT_EQ(validate_config(j)[0].path, "/system/B");

  auto t = json::parse(R"({"kind": "tabular_regret", "trials": 1, "mdp": "riverswim4"})");
  EXPECT_EQ(parse_config(t).tabular.mdp.n_states, 4);
  t["mdp"] = "lake";
  EXPECT_EQ(validate_config(t)[0].path, "/mdp");
}

TEST(Config, HashIsStable) {
  EXPECT_EQ(config_hash(fig1_config()), config_hash(fig1_config()));
  auto j = fig1_config();
  j["seed"] = 1;
  EXPECT_NE(config_hash(j), config_hash(fig1_config()));
  EXPECT_EQ(config_hash(fig1_config()).size(), 16u);
}

TEST(Run, TabularOutputsAreReproducible) {
  auto j = json::parse(R"({"kind": "tabular_regret", "trials": 3, "seed": 4, "mdp": "bandit",
                           "params": {"horizon": 2000, "trace_points": 10}})");
  auto a = parse_config(j);
  a.output_dir = scratch("tab_a");
  auto b = a;
  b.output_dir = scratch("tab_b");
  const auto ra = run_experiment(a, 1);
  run_experiment(b, 2);
  for (const char* f : {"tabular_summary.csv", "tabular_quantiles.csv", "traces/ucrl2_trial2.csv"}) {
    EXPECT_EQ(slurp(a.output_dir / f), slurp(b.output_dir / f)) << f;
  }
  EXPECT_EQ(read_csv(a.output_dir / "traces/ucrl2_trial0.csv").header,
            (std::vector<std::string>{"t", "cost", "regret", "episode"}));
  const auto manifest = json::parse(slurp(a.output_dir / "manifest.json"));
  EXPECT_EQ(manifest.at("config_hash"), ra.config_hash);
  EXPECT_EQ(manifest.at("kind"), "tabular_regret");
  fs::remove_all(a.output_dir);
  fs::remove_all(b.output_dir);
}

TEST(Run, Fig1SummarySchema) {
  auto j = fig1_config();
  j["params"] = json::parse(
      R"({"n_grid": [5, 40], "all_steps": false, "sls": {"horizon": 16, "max_horizon": 16}})");
  auto cfg = parse_config(j);
  cfg.output_dir = scratch("fig1");
  run_experiment(cfg, 1);
  const auto t = read_csv(cfg.output_dir / "fig1_summary.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"N", "frac_stable_ce", "frac_stable_robust",
                                                "median_rel_cost_ce", "median_rel_cost_robust"}));
  ASSERT_EQ(t.rows.size(), 2u);
  // Five rollouts cannot identify six parameters per row.
  EXPECT_EQ(t.rows[0][1], "0");
  EXPECT_EQ(t.rows[0][2], "0");
  fs::remove_all(cfg.output_dir);
}

TEST(Run, ModelFreeHistorySchema) {
  auto j = json::parse(R"({"kind": "model_free", "trials": 2, "system": {"preset": "modelfree_sys"},
                           "params": {"budgets": [2000], "methods": ["nominal", "pg_vf", "dfo"]}})");
  auto cfg = parse_config(j);
  cfg.output_dir = scratch("mf");
  run_experiment(cfg, 2);
  EXPECT_EQ(read_csv(cfg.output_dir / "histories/dfo_N2000_trial1.csv").header,
            (std::vector<std::string>{"iteration", "samples_used", "J_theta", "rel_error"}));
  const auto s = read_csv(cfg.output_dir / "model_free_summary.csv");
  EXPECT_EQ(s.rows.size(), 3u);
  fs::remove_all(cfg.output_dir);
}

TEST(Run, AdaptiveTraceSchema) {
  auto j = json::parse(R"({"kind": "fig2_regret", "trials": 1, "system": {"preset": "exampledynamics"},
                           "weights": {"Q": 10},
                           "params": {"horizon": 800, "methods": ["ce"],
                                      "sls": {"horizon": 16, "max_horizon": 16}}})");
  auto cfg = parse_config(j);
  cfg.output_dir = scratch("fig2");
  run_experiment(cfg, 1);
  EXPECT_EQ(read_csv(cfg.output_dir / "traces/ce_trial0.csv").header,
            (std::vector<std::string>{"t", "cum_cost", "regret", "epoch", "sigma_eta2", "eps_A",
                                      "eps_B", "stable_flag"}));
  EXPECT_EQ(read_csv(cfg.output_dir / "fig2_quantiles.csv").header,
            (std::vector<std::string>{"method", "t", "median", "p10", "p90"}));
  fs::remove_all(cfg.output_dir);
}

TEST(Workers, EnvironmentCap) {
  setenv("REGRETLAB_THREADS", "3", 1);
  EXPECT_EQ(worker_count(0), 3);
  EXPECT_EQ(worker_count(8), 3);
  EXPECT_EQ(worker_count(2), 2);
  unsetenv("REGRETLAB_THREADS");
  EXPECT_GE(worker_count(0), 1);
}
