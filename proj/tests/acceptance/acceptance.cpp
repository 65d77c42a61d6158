// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures, capped at 1.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "regretlab/error.hpp"
#include "regretlab/experiment.hpp"
#include "regretlab/model_free.hpp"
#include "regretlab/presets.hpp"
#include "regretlab/rng.hpp"
#include "regretlab/stats.hpp"
#include "regretlab/tabular.hpp"

using namespace regretlab;
using nlohmann::json;
namespace ex = regretlab::experiment;

namespace {

int failures = 0;
int threads = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

void info(const std::string& name, const std::string& detail) {
  std::printf("INFO %s: %s\n", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ex::ExperimentConfig config(const char* text) { return ex::parse_config(json::parse(text)); }

// ---------------------------------------------------------------------------

void fig1_shape() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = config(R"({
    "kind": "fig1_stability", "trials": 100, "seed": 1,
    "system": {"preset": "exampledynamics"}, "weights": {"Q": 0.001, "R": 1},
    "params": {"n_grid": [5, 10, 15, 20, 30, 40, 50, 60, 80, 100], "rollout_horizon": 6}
  })");
  const auto r = ex::run_fig1(cfg, threads);
  const double elapsed = seconds_since(t0);

  std::string curve;
  int inversions = 0;
  bool reaches_one = false;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    curve += fmt("%s%d:%.2f/%.2f", i ? " " : "", row.N, row.frac_stable_ce, row.frac_stable_robust);
    if (i > 0 && row.frac_stable_robust < r.rows[i - 1].frac_stable_robust) ++inversions;
    reaches_one = reaches_one || row.frac_stable_robust == 1.0;
  }
  info("fig1 stability (N:ce/robust)", curve);
  verdict(inversions <= 1, "fig1 robust stability monotone in N",
          fmt("%d inversion(s), at most 1 allowed", inversions));
  verdict(reaches_one, "fig1 robust stability reaches 100%", reaches_one ? "yes" : "no N <= 100");
  const double ce100 = r.rows.back().frac_stable_ce;
  verdict(ce100 >= 0.8 && ce100 <= 1.0, "fig1 CE stability at N=100 in [80%, 100%]",
          fmt("%.0f%%", 100.0 * ce100));

  // Medians over the trials where both controllers stabilize.
  bool ordered = true;
  std::string detail;
  int compared = 0;
  for (const auto& row : r.rows) {
    std::vector<double> ce, robust;
    for (const auto& t : r.trials) {
      if (t.N == row.N && t.ce_stable && t.robust_stable) {
        ce.push_back(t.ce_rel_cost);
        robust.push_back(t.robust_rel_cost);
      }
    }
    if (ce.empty()) continue;
    ++compared;
    const double mc = median(ce), mr = median(robust);
    if (mc > mr) {
      ordered = false;
      detail += fmt(" N=%d: %.3g > %.3g;", row.N, mc, mr);
    }
  }
  verdict(ordered && compared > 0, "fig1 median CE cost <= median robust cost where both stabilize",
          ordered ? fmt("holds at all %d N with joint successes", compared) : detail);
  verdict(elapsed <= 600.0, "fig1 runtime <= 10 min", fmt("%.0f s", elapsed));

  // The same CE rate when only the last step of each rollout is kept.
  int stable = 0;
  for (int i = 0; i < cfg.trials; ++i) {
    const std::uint64_t seed = trial_seed(cfg.seed, i) ^ (100ULL << 32);
    const auto est = sysid::estimate_multi_rollout(sysid::collect_rollouts(cfg.system, 100, 6, 1.0, seed));
    try {
      stable += is_stabilizing(cfg.system, solve_dare(est.as_system(1.0), cfg.weights).K);
    } catch (const Error&) {
    }
  }
  info("fig1 CE stability at N=100, last step of each rollout only", fmt("%d%%", stable));
}

void suboptimality_certificate() {
  const auto cfg = config(R"({
    "kind": "custom", "trials": 100, "seed": 7,
    "system": {"preset": "exampledynamics"}, "weights": {"Q": 0.001, "R": 1},
    "params": {"rollouts": 10000, "rollout_horizon": 6, "eps_source": "oracle"}
  })");
  const auto r = ex::run_custom(cfg, threads);
  int applicable = 0, held = 0;
  double worst_product = 0.0, best_product = 1e300;
  for (const auto& t : r.trials) {
    worst_product = std::max(worst_product, t.certificate_product);
    best_product = std::min(best_product, t.certificate_product);
    if (!t.certificate_applicable) continue;
    ++applicable;
    // Relative error of the H2 norm J = sqrt(average cost).
    const double rel_h2 = std::sqrt(1.0 + t.robust_rel_cost) - 1.0;
    held += rel_h2 <= t.certificate;
  }
  verdict(held == applicable, "suboptimality certificate holds whenever applicable",
          fmt("%d/%d applicable trials hold; certificate product over trials in [%.3g, %.3g], "
              "applicability needs <= 0.2",
              held, applicable, best_product, worst_product));

  // Same check where the condition can bind.
  auto strong = cfg;
  strong.weights = presets::example_weights(10.0);
  strong.trials = 20;
  const auto s = ex::run_custom(strong, threads);
  int a2 = 0, h2 = 0;
  for (const auto& t : s.trials) {
    if (!t.certificate_applicable) continue;
    ++a2;
    h2 += std::sqrt(1.0 + t.robust_rel_cost) - 1.0 <= t.certificate;
  }
  info("suboptimality certificate at Q=10I", fmt("%d/%d applicable trials hold", h2, a2));
}

void identification() {
  const auto cfg = config(R"({
    "kind": "sysid_coverage", "trials": 200, "seed": 4,
    "system": {"preset": "exampledynamics"},
    "params": {"rollouts": 2000, "rollout_horizon": 6, "delta": 0.1,
               "single_lengths": [250, 1000, 4000, 16000]}
  })");
  const auto r = ex::run_sysid(cfg, threads);
  verdict(r.coverage_fraction >= 0.9, "identification bound coverage >= 90% (delta=0.1, N=2000)",
          fmt("%.1f%% of 200 seeds, eps_A=%.3g eps_B=%.3g", 100.0 * r.coverage_fraction,
              r.coverage[0].eps_A, r.coverage[0].eps_B));
  verdict(std::abs(r.single_slope + 0.5) <= 0.1, "single-trajectory error slope -0.5 +- 0.1",
          fmt("%.3f", r.single_slope));
}

void regret_exponents() {
  const auto cfg = config(R"({
    "kind": "fig2_regret", "trials": 100, "seed": 2,
    "system": {"preset": "exampledynamics"}, "weights": {"Q": 10, "R": 1},
    "params": {"horizon": 100000, "C_T": 100, "C_eta": 1.0, "warmup_rollouts": 100,
               "methods": ["robust", "ce"]}
  })");
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = ex::run_fig2(cfg, threads);
  const auto& robust = r.methods[0];
  const auto& ce = r.methods[1];
  info("regret runs", fmt("%zu trials kept, %d skipped, %.0f s; infeasible epochs %d/%d, resets %d/%d",
                          robust.regret.size(), r.skipped_trials, seconds_since(t0),
                          robust.infeasible_epochs, ce.infeasible_epochs, robust.resets, ce.resets));
  verdict(robust.slope >= 0.60 && robust.slope <= 0.75, "robust adaptive regret slope in [0.60, 0.75]",
          fmt("%.3f", robust.slope));
  verdict(ce.slope >= 0.40 && ce.slope <= 0.60, "CE adaptive regret slope in [0.40, 0.60]",
          fmt("%.3f", ce.slope));
  verdict(ce.median.back() <= robust.median.back(), "CE median regret <= robust median regret at T",
          fmt("%.4g vs %.4g", ce.median.back(), robust.median.back()));
}

double pg_total_variance(const LinearSystem& sys, const LqrWeights& w, const MatrixXd& K,
                         model_free::Baseline b, int seeds) {
  model_free::PgOptions o;
  o.horizon = 200;
  o.baseline = b;
  o.baseline_cost = oracle::finite_horizon_cost(sys, w, K, o.horizon, o.sigma);
  std::vector<std::vector<double>> g(K.size());
  for (int s = 0; s < seeds; ++s) {
    const auto e = model_free::pg_gradient_estimate(sys, w, model_free::vec(K), o, 1000 + s);
    for (int i = 0; i < K.size(); ++i) g[i].push_back(e.g(i));
  }
  double v = 0.0;
  for (const auto& c : g) v += variance(c);
  return v;
}

void model_free_gap() {
  const auto cfg = config(R"({
    "kind": "model_free", "trials": 20, "seed": 3,
    "system": {"preset": "modelfree_sys"},
    "params": {"budgets": [10000, 100000], "methods": ["nominal", "lspi", "pg_simple", "pg_vf", "dfo"]}
  })");
  const auto r = ex::run_model_free(cfg, threads);
  for (long budget : {10000L, 100000L}) {
    double nominal = 0.0;
    std::string detail;
    for (const auto& s : r.summary) {
      if (s.budget != budget) continue;
      if (s.method == "nominal") nominal = s.median;
      detail += fmt("%s%s=%.3g", detail.empty() ? "" : " ", s.method.c_str(), s.median);
    }
    bool ok = true;
    for (const auto& s : r.summary) {
      if (s.budget == budget && s.method != "nominal") ok = ok && nominal < s.median;
    }
    verdict(ok, fmt("model-free median error: nominal below all others at N=%ld", budget), detail);
  }
  const auto sys = presets::model_free_system();
  const auto w = presets::model_free_weights();
  const MatrixXd K_star = solve_dare(sys, w).K.K;
  bool ok = true;
  std::string detail;
  for (const MatrixXd& K : {MatrixXd(MatrixXd::Zero(2, 3)), MatrixXd(0.5 * K_star), K_star}) {
    const double simple = pg_total_variance(sys, w, K, model_free::Baseline::kSimple, 400);
    const double vf = pg_total_variance(sys, w, K, model_free::Baseline::kValueFunction, 400);
    ok = ok && vf < simple;
    detail += fmt("%s%.4g < %.4g", detail.empty() ? "" : "; ", vf, simple);
  }
  verdict(ok, "PG(vf) gradient variance < PG(simple) variance", detail + " at K=0, K*/2, K*");
}

// ---------------------------------------------------------------------------

void numerical_oracles() {
  const auto s = presets::example_dynamics();
  {
    double worst = 0.0;
    for (double q : {1e-3, 1.0, 10.0}) {
      const auto w = presets::example_weights(q);
      const auto d = solve_dare(s, w);
      const MatrixXd BtPA = s.B.transpose() * d.P * s.A;
      const MatrixXd res = s.A.transpose() * d.P * s.A - d.P -
                           BtPA.transpose() * (w.R + s.B.transpose() * d.P * s.B).ldlt().solve(BtPA) + w.Q;
      worst = std::max(worst, res.cwiseAbs().maxCoeff());
    }
    verdict(worst <= 1e-9, "DARE fixed-point residual <= 1e-9", fmt("%.2e", worst));
  }
  {
    const auto w = presets::example_weights(1e-3);
    const MatrixXd K = solve_dare(s, w).K.K;
    const MatrixXd M = s.A + s.B * K;
    const MatrixXd W = w.Q + K.transpose() * w.R * K;
    const MatrixXd Mt = M.transpose();
    MatrixXd kron(9, 9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) kron.block(i * 3, j * 3, 3, 3) = Mt(i, j) * Mt;
    const VectorXd v = (MatrixXd::Identity(9, 9) - kron).fullPivLu().solve(
        Eigen::Map<const VectorXd>(W.data(), 9));
    const double err = (solve_dlyap(M, W) - Eigen::Map<const MatrixXd>(v.data(), 3, 3)).cwiseAbs().maxCoeff();
    verdict(err <= 1e-9, "dlyap matches Kronecker solve <= 1e-9", fmt("%.2e", err));
  }
  {
    const auto w = presets::example_weights(1.0);
    sysid::ModelEstimate est;
    est.A_hat = s.A;
    est.B_hat = s.B;
    ex::SlsSettings settings;
    auto p = settings.problem(est, w);
    p.inner = sls::InnerSolverOptions{};
    const auto sol = sls::robust_synthesize(p);
    const double J = lqr_cost(s, w, solve_dare(s, w).K);
    const double cost = sol.feasible ? sls::cost_under_mismatch(s, sol.response, est, w).cost : INFINITY;
    const double rel = std::abs(cost - J) / J;
    verdict(rel <= 0.01, "robust synthesis with eps=0 within 1% of DARE cost", fmt("%.2e", rel));
  }
  {
    const auto sys = presets::model_free_system();
    const auto w = presets::model_free_weights();
    const MatrixXd K_star = solve_dare(sys, w).K.K;
    const long T = 20;
    const int seeds = 4000;
    double worst_pg = 0.0, worst_dfo = 0.0;
    auto max_z = [](const std::vector<VectorXd>& g, const VectorXd& fd) {
      double z = 0.0;
      for (int i = 0; i < fd.size(); ++i) {
        std::vector<double> c;
        for (const auto& v : g) c.push_back(v(i));
        z = std::max(z, std::abs(mean(c) - fd(i)) / standard_error(c));
      }
      return z;
    };
    MatrixXd K1 = MatrixXd::Zero(2, 3);
    K1(0, 0) = -0.3;
    for (const MatrixXd& K : {K1, MatrixXd(0.5 * K_star), K_star}) {
      const VectorXd fd_pg = oracle::finite_difference_gradient(sys, w, K, T, 1.0);
      for (auto b : {model_free::Baseline::kSimple, model_free::Baseline::kValueFunction}) {
        model_free::PgOptions o;
        o.horizon = T;
        o.baseline = b;
        o.baseline_cost = oracle::finite_horizon_cost(sys, w, K, T, 1.0);
        std::vector<VectorXd> g;
        for (int k = 0; k < seeds; ++k) {
          g.push_back(model_free::pg_gradient_estimate(sys, w, model_free::vec(K), o, 50000 + k).g);
        }
        worst_pg = std::max(worst_pg, max_z(g, fd_pg));
      }
      const VectorXd fd = oracle::finite_difference_gradient(sys, w, K, T, 0.0);
      const auto cost = model_free::rollout_cost(sys, w, T);
      std::vector<VectorXd> g;
      for (int k = 0; k < seeds; ++k) {
        g.push_back(model_free::dfo_gradient_estimate(cost, model_free::vec(K), 0.01, T, 90000 + k).g);
      }
      worst_dfo = std::max(worst_dfo, max_z(g, fd));
    }
    verdict(worst_pg <= 3.0, "PG gradient within 3 SE of finite differences at 3 policies",
            fmt("max |z| = %.2f over both baselines and 6 coordinates", worst_pg));
    verdict(worst_dfo <= 3.0, "DFO gradient within 3 SE of finite differences at 3 policies",
            fmt("max |z| = %.2f over 6 coordinates", worst_dfo));
  }
  {
    const auto sys = presets::model_free_system();
    const auto w = presets::model_free_weights();
    LinearSystem quiet = sys;
    quiet.sigma_w = 0.0;
    const MatrixXd K = 0.5 * solve_dare(sys, w).K.K;
    Rng explore(5, 2);
    const Policy behavior = [&](const VectorXd& x) -> VectorXd { return explore.normal_vector(2); };
    SimulationOptions opt;
    opt.x0 = VectorXd::Ones(3);
    const auto data = simulate(quiet, behavior, w, 200, 1, opt);
    const double err =
        (model_free::lstdq(data, K, 0.0).H - model_free::analytic_q_matrix(sys, w, K)).cwiseAbs().maxCoeff();
    verdict(err <= 1e-6, "LSTD-Q recovers analytic H noiselessly within 1e-6", fmt("%.2e", err));
  }
}

void tabular_suite() {
  {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto mdp = tabular::random_mdp(4, 3, 1000 + seed);
      const double g = tabular::average_value_iteration(mdp).g(0);
      double best = INFINITY;
      tabular::Policy pi(4, 0);
      for (int code = 0; code < 81; ++code) {
        for (int x = 0, c = code; x < 4; ++x, c /= 3) pi[x] = c % 3;
        best = std::min(best, tabular::policy_gain_bias(mdp, pi).g(0));
      }
      worst = std::max(worst, std::abs(g - best));
    }
    verdict(worst <= 1e-8, "average VI matches policy enumeration on 20 random MDPs",
            fmt("max |g - g*| = %.2e", worst));
  }
  for (const char* name : {"bandit", "riverswim4"}) {
    auto cfg = config(R"({"kind": "tabular_regret", "trials": 10, "seed": 5, "mdp": "bandit",
                          "params": {"horizon": 100000, "delta": 0.05}})");
    cfg.tabular.mdp = tabular::mdp_preset(name);
    cfg.tabular.mdp_name = name;
    const auto r = ex::run_tabular(cfg, threads);
    verdict(r.max_final_regret < r.envelope, fmt("UCRL2 regret below envelope on %s", name),
            fmt("max regret %.4g, envelope %.4g (D=%.3g)", r.max_final_regret, r.envelope, r.diameter));
    verdict(r.slope <= 0.8, fmt("UCRL2 regret sublinear on %s", name),
            fmt("median slope %.3f; optimism violations %d of %d in-set episodes", r.slope,
                r.optimism_violations, r.in_set_episodes));
  }
  {
    const double T = 1e6;
    bool exact = true;
    std::string detail;
    for (double gap : {0.1, 0.25, 0.4}) {
      for (int k : {1, 2, 3, 4, 8}) {
        std::vector<double> costs(1, 0.2), doubled(1, 0.2);
        costs.resize(1 + k, 0.2 + gap);
        doubled.resize(1 + 2 * k, 0.2 + gap);
        const double a = tabular::decoupled_lower_bound(tabular::bandit(costs), T);
        const double b = tabular::decoupled_lower_bound(tabular::bandit(doubled), T);
        if (b != 2.0 * a) {
          exact = false;
          detail = fmt("gap %.2f, %d arms: %.17g vs 2 x %.17g", gap, k, b, a);
        }
      }
    }
    verdict(exact, "decoupled lower bound doubles exactly when equal-gap arms are doubled",
            exact ? "gaps 0.1, 0.25, 0.4 with 1, 2, 3, 4, 8 arms" : detail);
  }
}

}  // namespace

int main() {
  threads = ex::worker_count(0);
  const auto t0 = std::chrono::steady_clock::now();
  numerical_oracles();
  tabular_suite();
  identification();
  model_free_gap();
  suboptimality_certificate();
  fig1_shape();
  regret_exponents();
  std::printf("%d failure(s), %.0f s\n", failures, seconds_since(t0));
  return failures > 0 ? 1 : 0;
}
