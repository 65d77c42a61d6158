#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "regretlab/adaptive.hpp"
#include "regretlab/lti.hpp"
#include "regretlab/sls.hpp"
#include "regretlab/sysid.hpp"
#include "regretlab/tabular.hpp"

namespace regretlab::experiment {

enum class Kind { kFig1Stability, kFig2Regret, kModelFree, kSysidCoverage, kTabularRegret, kCustom };
std::string_view to_string(Kind kind);
std::optional<Kind> parse_kind(std::string_view name);

struct SlsSettings {
  int horizon = 32;
  double alpha = 0.5;
  int gamma_points = 20;
  double gamma_top = 0.995;
  int freq_grid = kDefaultFreqGrid;
  double eps_V = 1e-4;
  int max_horizon = 128;
  int max_iter = 300;
  double primal_tol = 1e-4;
  double objective_rtol = 1e-6;

  sls::SlsProblem problem(const sysid::ModelEstimate& est, const LqrWeights& w) const;
};

struct Fig1Params {
  std::vector<int> n_grid{5, 10, 15, 20, 30, 40, 50, 60, 80, 100};
  int rollout_horizon = 6;
  double sigma_u = 1.0;
  bool all_steps = true;  // regress on every step of each rollout, not just the last
  sysid::ErrorSource eps_source = sysid::ErrorSource::kOracleTrue;
  double delta = 0.05;
  int bootstrap_resamples = 100;
  SlsSettings sls;
};

struct Fig2Params {
  long horizon = 100000;
  long C_T = 100;
  double C_eta = 1.0;
  int warmup_rollouts = 100;
  int warmup_horizon = 6;
  double delta = 0.05;
  sysid::ErrorSource eps_source = sysid::ErrorSource::kOracleTrue;
  std::vector<adaptive::Mode> methods{adaptive::Mode::kRobustSls,
                                      adaptive::Mode::kCertaintyEquivalent};
  int trace_points = 60;
  SlsSettings sls;
};

struct ModelFreeParams {
  std::vector<long> budgets{2000, 5000, 10000, 20000, 50000, 100000};
  std::vector<std::string> methods{"nominal", "lspi", "pg_simple", "pg_vf", "dfo"};
  double sigma_u = 1.0;
  int lspi_iters = 5;
  long rollout_horizon = 200;
  double pg_step = 5e-5;
  double pg_sigma = 1.0;
  double dfo_step = 2e-3;
  double dfo_sigma = 0.1;
  double radius_factor = 5.0;  // projection radius in units of ||K*||
  bool write_histories = true;
};

struct SysidParams {
  long rollouts = 2000;
  int rollout_horizon = 6;
  double sigma_u = 1.0;
  double delta = 0.1;
  std::vector<long> single_lengths{500, 2000, 8000};
  std::string single_system = "modelfree_sys";
};

struct TabularParams {
  tabular::TabularMdp mdp;
  std::string mdp_name = "riverswim4";
  long horizon = 100000;
  double delta = 0.05;
  tabular::Ucrl2Options ucrl2;
  int trace_points = 60;
};

struct CustomParams {
  long rollouts = 10000;
  int rollout_horizon = 6;
  double sigma_u = 1.0;
  sysid::ErrorSource eps_source = sysid::ErrorSource::kOracleTrue;
  double delta = 0.05;
  SlsSettings sls;
};

struct ExperimentConfig {
  Kind kind = Kind::kCustom;
  std::string system_name;  // preset name, empty for inline matrices
  LinearSystem system;
  LqrWeights weights;
  int trials = 1;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  Fig1Params fig1;
  Fig2Params fig2;
  ModelFreeParams model_free;
  SysidParams sysid;
  TabularParams tabular;
  CustomParams custom;
  nlohmann::json source;
};

struct Diagnostic {
  std::string path;  // JSON pointer
  std::string message;
};

// Removes // and /* */ comments outside string literals.
std::string strip_comments(std::string_view text);
nlohmann::json parse_config_text(std::string_view text);
nlohmann::json load_config_json(const std::filesystem::path& path);

// Every invariant violation with its JSON pointer; empty iff runnable.
std::vector<Diagnostic> validate_config(const nlohmann::json& j);
// Throws Config (message lists the diagnostics) when validation fails.
ExperimentConfig parse_config(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Per-kind runners. `threads` = 0 uses REGRETLAB_THREADS or the hardware.

int worker_count(int requested);

struct Fig1Trial {
  int N = 0;
  int trial = 0;
  double eps_A = 0.0;
  double eps_B = 0.0;
  bool ce_stable = false;
  double ce_rel_cost = 0.0;
  sls::SlsStatus robust_status = sls::SlsStatus::kInfeasible;
  bool robust_stable = false;
  double robust_rel_cost = 0.0;
  double gamma = 0.0;
  double bound = 0.0;
};

struct Fig1Row {
  int N = 0;
  double frac_stable_ce = 0.0;
  double frac_stable_robust = 0.0;
  double median_rel_cost_ce = 0.0;      // over stabilizing trials, nan if none
  double median_rel_cost_robust = 0.0;
};

struct Fig1Result {
  std::vector<Fig1Row> rows;
  std::vector<Fig1Trial> trials;
};

Fig1Result run_fig1(const ExperimentConfig& cfg, int threads = 0);

struct RegretCurves {
  adaptive::Mode method = adaptive::Mode::kRobustSls;
  std::vector<long> times;
  std::vector<std::vector<double>> regret;  // [trial][k]
  std::vector<double> median;
  std::vector<double> p10;
  std::vector<double> p90;
  double slope = 0.0;                       // log-log fit of the median over [T/100, T]
  std::vector<double> final_error;          // max spectral error of the last fit
  std::vector<std::vector<long>> epoch_ends;     // [trial][epoch]
  std::vector<std::vector<double>> epoch_error;  // [trial][epoch]
  int infeasible_epochs = 0;
  int resets = 0;
  int unstable_epochs = 0;
};

struct Fig2Result {
  std::vector<RegretCurves> methods;
  int skipped_trials = 0;  // no stabilizing initial controller
};

// Writes one trace CSV per trial and method into `trace_dir` when given.
Fig2Result run_fig2(const ExperimentConfig& cfg, int threads = 0,
                    const std::optional<std::filesystem::path>& trace_dir = std::nullopt);

struct ModelFreeRow {
  std::string method;
  long budget = 0;
  int trial = 0;
  double rel_error = 0.0;
};

struct ModelFreeSummary {
  std::string method;
  long budget = 0;
  double median = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
};

struct ModelFreeResult {
  std::vector<ModelFreeRow> rows;
  std::vector<ModelFreeSummary> summary;
};

ModelFreeResult run_model_free(const ExperimentConfig& cfg, int threads = 0,
                               const std::optional<std::filesystem::path>& history_dir =
                                   std::nullopt);

struct CoverageTrial {
  int trial = 0;
  double err_A = 0.0;
  double err_B = 0.0;
  double eps_A = 0.0;
  double eps_B = 0.0;
  bool covered = false;
};

struct SingleTrajectoryRow {
  long T = 0;
  int trial = 0;
  double error = 0.0;  // max(||A_hat - A||, ||B_hat - B||)
};

struct SysidResult {
  std::vector<CoverageTrial> coverage;
  double coverage_fraction = 0.0;
  std::vector<SingleTrajectoryRow> single;
  double single_slope = 0.0;
};

SysidResult run_sysid(const ExperimentConfig& cfg, int threads = 0);

struct TabularResult {
  std::vector<long> times;
  std::vector<std::vector<double>> regret;  // [trial][k]
  std::vector<double> median;
  std::vector<double> p10;
  std::vector<double> p90;
  double slope = 0.0;
  double g_star = 0.0;
  double diameter = 0.0;
  double envelope = 0.0;
  double max_final_regret = 0.0;
  int in_set_episodes = 0;
  int optimism_violations = 0;
};

TabularResult run_tabular(const ExperimentConfig& cfg, int threads = 0,
                          const std::optional<std::filesystem::path>& trace_dir = std::nullopt);

struct CustomTrial {
  int trial = 0;
  double eps_A = 0.0;
  double eps_B = 0.0;
  double ce_rel_cost = 0.0;
  sls::SlsStatus robust_status = sls::SlsStatus::kInfeasible;
  double robust_rel_cost = 0.0;
  double worst_case_bound = 0.0;
  double certificate = 0.0;
  double certificate_product = 0.0;
  bool certificate_applicable = false;
};

struct CustomResult {
  std::vector<CustomTrial> trials;
  std::optional<sls::SlsSolution> first_solution;
};

CustomResult run_custom(const ExperimentConfig& cfg, int threads = 0);

struct RunReport {
  std::vector<std::filesystem::path> files;
  double wall_time = 0.0;
  std::string config_hash;
};

// Runs the configured experiment and writes its CSVs and manifest.json into
// cfg.output_dir.
RunReport run_experiment(const ExperimentConfig& cfg, int threads = 0);

std::string config_hash(const nlohmann::json& j);  // FNV-1a 64, hex
std::string_view version();

}  // namespace regretlab::experiment
