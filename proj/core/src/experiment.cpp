#include "regretlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <Eigen/Core>

#include "regretlab/csv.hpp"
#include "regretlab/error.hpp"
#include "regretlab/json_io.hpp"
#include "regretlab/model_free.hpp"
#include "regretlab/presets.hpp"
#include "regretlab/rng.hpp"
#include "regretlab/stats.hpp"

#ifndef REGRETLAB_VERSION
#define REGRETLAB_VERSION "0.0.0"
#endif

namespace regretlab::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Runs fn(0..n-1) on a pool; rethrows the exception of the lowest failing index.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_index = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int k = 0; k < workers; ++k) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double rel(double cost, double J_star) {
  return std::isfinite(cost) ? (cost - J_star) / J_star : kInf;
}

double median_or_nan(const std::vector<double>& v) { return v.empty() ? kNaN : median(v); }

std::vector<long> log_times(long T, int points) {
  std::vector<long> out;
  for (double v : logspace(1.0, static_cast<double>(T), points)) {
    out.push_back(std::clamp(std::lround(v), 1L, T));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Slope of log(y) on log(t) over t >= lo with y > 0.
double tail_slope(const std::vector<long>& t, const std::vector<double>& y, double lo) {
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (static_cast<double>(t[k]) >= lo && y[k] > 0.0) {
      xs.push_back(static_cast<double>(t[k]));
      ys.push_back(y[k]);
    }
  }
  if (xs.size() < 2) return kNaN;
  return loglog_fit(xs, ys).slope;
}

struct Bands {
  std::vector<double> median, p10, p90;
};

Bands bands(const std::vector<std::vector<double>>& rows, std::size_t points) {
  Bands b;
  for (std::size_t k = 0; k < points; ++k) {
    std::vector<double> col;
    for (const auto& r : rows) col.push_back(r[k]);
    if (col.empty()) {
      b.median.push_back(kNaN);
      b.p10.push_back(kNaN);
      b.p90.push_back(kNaN);
      continue;
    }
    b.median.push_back(quantile(col, 0.5));
    b.p10.push_back(quantile(col, 0.1));
    b.p90.push_back(quantile(col, 0.9));
  }
  return b;
}

struct Identified {
  sysid::RolloutBatch batch;
  std::optional<sysid::ModelEstimate> estimate;  // nullopt: regressors rank deficient
};

Identified identify(const LinearSystem& sys, int N, int horizon, double sigma_u,
                    sysid::ErrorSource source, double delta, int resamples,
                    std::uint64_t seed, bool all_steps = false) {
  Identified out;
  out.batch = sysid::collect_rollouts(sys, N, horizon, sigma_u, seed, all_steps);
  try {
    auto est = sysid::estimate_multi_rollout(out.batch);
    sysid::ErrorBounds eps;
    switch (source) {
      case sysid::ErrorSource::kOracleTrue:
        eps = sysid::oracle_errors(est, sys);
        break;
      case sysid::ErrorSource::kTheoryBound:
        eps = sysid::theory_bound_values({sys.A, sys.B, sys.sigma_w, sigma_u, horizon}, N, delta);
        break;
      case sysid::ErrorSource::kBootstrap:
        eps = sysid::bootstrap_error_bounds(out.batch, est, resamples, delta, seed ^ 0x5bd1e995ULL);
        break;
    }
    est.eps_A = eps.eps_A;
    est.eps_B = eps.eps_B;
    est.provenance = source;
    out.estimate = est;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kRankDeficient && e.code() != ErrorCode::kSingularGramian) throw;
  }
  return out;
}

struct CeOutcome {
  bool stable = false;
  double rel_cost = kInf;
};

CeOutcome certainty_equivalent(const LinearSystem& sys, const LqrWeights& w,
                               const sysid::ModelEstimate& est, double J_star) {
  CeOutcome out;
  try {
    const auto dare = solve_dare(est.as_system(sys.sigma_w), w);
    out.stable = is_stabilizing(sys, dare.K);
    out.rel_cost = out.stable ? rel(lqr_cost(sys, w, dare.K), J_star) : kInf;
  } catch (const Error&) {
  }
  return out;
}

const char* flag(bool b) { return b ? "1" : "0"; }

}  // namespace

sls::SlsProblem SlsSettings::problem(const sysid::ModelEstimate& est, const LqrWeights& w) const {
  sls::SlsProblem p;
  p.estimate = est;
  p.weights = w;
  p.horizon = horizon;
  p.alpha = alpha;
  p.gamma_grid = sls::default_gamma_grid(gamma_points, gamma_top);
  p.freq_grid = freq_grid;
  p.eps_V = eps_V;
  p.max_horizon = max_horizon;
  p.inner.max_iter = max_iter;
  p.inner.primal_tol = primal_tol;
  p.inner.objective_rtol = objective_rtol;
  return p;
}

int worker_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("REGRETLAB_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = requested > 0 ? std::min(n, cap) : cap;
  }
  return std::max(1, n);
}

// ---------------------------------------------------------------------------

Fig1Result run_fig1(const ExperimentConfig& cfg, int threads) {
  const auto& P = cfg.fig1;
  const LinearSystem& sys = cfg.system;
  const double J_star = lqr_cost(sys, cfg.weights, solve_dare(sys, cfg.weights).K);
  const int per_n = cfg.trials;
  const int total = per_n * static_cast<int>(P.n_grid.size());

  Fig1Result res;
  res.trials.resize(total);
  parallel_for(total, worker_count(threads), [&](int k) {
    const int N = P.n_grid[k / per_n];
    const int i = k % per_n;
    const std::uint64_t seed = trial_seed(cfg.seed, i) ^ (static_cast<std::uint64_t>(N) << 32);
    Fig1Trial t;
    t.N = N;
    t.trial = i;
    t.ce_rel_cost = kInf;
    t.robust_rel_cost = kInf;
    const auto id = identify(sys, N, P.rollout_horizon, P.sigma_u, P.eps_source, P.delta,
                             P.bootstrap_resamples, seed, P.all_steps);
    if (id.estimate) {
      const auto& est = *id.estimate;
      t.eps_A = est.eps_A;
      t.eps_B = est.eps_B;
      const auto ce = certainty_equivalent(sys, cfg.weights, est, J_star);
      t.ce_stable = ce.stable;
      t.ce_rel_cost = ce.rel_cost;
      const auto sol = sls::robust_synthesize(P.sls.problem(est, cfg.weights));
      t.robust_status = sol.status;
      if (sol.feasible) {
        t.gamma = sol.gamma_used;
        t.bound = sol.worst_case_bound;
        const auto m = sls::cost_under_mismatch(sys, sol.response, est, cfg.weights, P.sls.freq_grid);
        t.robust_stable = m.stabilizing;
        t.robust_rel_cost = m.stabilizing ? rel(m.cost, J_star) : kInf;
      }
    } else {
      t.eps_A = t.eps_B = kInf;
    }
    res.trials[k] = t;
  });

  for (std::size_t g = 0; g < P.n_grid.size(); ++g) {
    Fig1Row row;
    row.N = P.n_grid[g];
    int ce = 0, robust = 0;
    std::vector<double> ce_costs, robust_costs;
    for (int i = 0; i < per_n; ++i) {
      const auto& t = res.trials[g * per_n + i];
      ce += t.ce_stable;
      robust += t.robust_stable;
      if (t.ce_stable) ce_costs.push_back(t.ce_rel_cost);
      if (t.robust_stable) robust_costs.push_back(t.robust_rel_cost);
    }
    row.frac_stable_ce = static_cast<double>(ce) / per_n;
    row.frac_stable_robust = static_cast<double>(robust) / per_n;
    row.median_rel_cost_ce = median_or_nan(ce_costs);
    row.median_rel_cost_robust = median_or_nan(robust_costs);
    res.rows.push_back(row);
  }
  return res;
}

// ---------------------------------------------------------------------------

Fig2Result run_fig2(const ExperimentConfig& cfg, int threads,
                    const std::optional<fs::path>& trace_dir) {
  const auto& P = cfg.fig2;
  const LinearSystem& sys = cfg.system;
  const int n_methods = static_cast<int>(P.methods.size());

  struct TrialOut {
    bool skipped = false;
    std::vector<adaptive::RegretTrace> traces;  // per method, cost vectors dropped
    std::vector<std::vector<double>> regret;    // per method at the sample times
  };
  std::vector<TrialOut> out(cfg.trials);

  // The epoch schedule does not depend on the data, so every run shares the
  // sample times; they are fixed by a dry schedule here.
  std::vector<long> times;
  {
    adaptive::RegretTrace dry;
    long start = 0;
    for (int i = 0; start < P.horizon; ++i) {
      adaptive::EpochRecord e;
      e.index = i;
      e.start = start;
      e.length = std::min(P.C_T << std::min(i, 62), P.horizon - start);
      dry.epochs.push_back(e);
      start += e.length;
    }
    dry.cost.assign(P.horizon, 0.0);
    times = adaptive::trace_sample_times(dry, P.trace_points);
  }

  parallel_for(cfg.trials, worker_count(threads), [&](int i) {
    const std::uint64_t seed = trial_seed(cfg.seed, i);
    TrialOut& o = out[i];
    const auto id = identify(sys, P.warmup_rollouts, P.warmup_horizon, 1.0, P.eps_source, P.delta,
                             50, seed ^ 0x9e3779b97f4a7c15ULL);
    if (!id.estimate) {
      o.skipped = true;
      return;
    }
    auto problem = P.sls.problem(*id.estimate, cfg.weights);
    const auto sol = sls::robust_synthesize(problem);
    if (!sol.feasible) {
      o.skipped = true;
      return;
    }
    const auto initial = adaptive::Controller::from_response(sol.response);
    if (!(initial.closed_loop_radius(sys) < 1.0)) {
      o.skipped = true;
      return;
    }
    for (const auto mode : P.methods) {
      adaptive::AdaptiveConfig ac;
      ac.mode = mode;
      ac.initial = initial;
      ac.warmup = id.batch.transitions;
      ac.delta = P.delta;
      ac.C_T = P.C_T;
      ac.C_eta = P.C_eta;
      ac.total_steps = P.horizon;
      ac.seed = seed;
      ac.eps_source = P.eps_source;
      ac.synthesis = problem;
      auto tr = adaptive::run_adaptive(sys, cfg.weights, ac);
      if (trace_dir) {
        adaptive::write_trace_csv(*trace_dir / (std::string(adaptive::to_string(mode)) + "_trial" +
                                                std::to_string(i) + ".csv"),
                                  tr, times);
      }
      std::vector<double> r;
      for (long t : times) r.push_back(adaptive::regret_of(tr, t));
      o.regret.push_back(std::move(r));
      tr.cost.clear();
      tr.cost.shrink_to_fit();
      tr.cum_cost.clear();
      tr.cum_cost.shrink_to_fit();
      tr.epoch_of.clear();
      tr.epoch_of.shrink_to_fit();
      o.traces.push_back(std::move(tr));
    }
  });

  Fig2Result res;
  for (const auto& o : out) res.skipped_trials += o.skipped;
  for (int m = 0; m < n_methods; ++m) {
    RegretCurves c;
    c.method = P.methods[m];
    c.times = times;
    for (const auto& o : out) {
      if (o.skipped) continue;
      c.regret.push_back(o.regret[m]);
      const auto& tr = o.traces[m];
      c.final_error.push_back(std::max(tr.final_err_A, tr.final_err_B));
      std::vector<long> ends;
      std::vector<double> errs;
      for (const auto& e : tr.epochs) {
        ends.push_back(e.start + e.length);
        errs.push_back(std::max(e.err_A, e.err_B));
        c.infeasible_epochs += e.infeasible;
        c.resets += e.reset;
        c.unstable_epochs += !e.stable;
      }
      c.epoch_ends.push_back(std::move(ends));
      c.epoch_error.push_back(std::move(errs));
    }
    const auto b = bands(c.regret, times.size());
    c.median = b.median;
    c.p10 = b.p10;
    c.p90 = b.p90;
    c.slope = tail_slope(times, c.median, static_cast<double>(P.horizon) / 100.0);
    res.methods.push_back(std::move(c));
  }
  return res;
}

// ---------------------------------------------------------------------------

ModelFreeResult run_model_free(const ExperimentConfig& cfg, int threads,
                               const std::optional<fs::path>& history_dir) {
  using namespace model_free;
  const auto& P = cfg.model_free;
  const LinearSystem& sys = cfg.system;
  const LqrWeights& w = cfg.weights;
  const int nx = sys.nx();
  const int nu = sys.nu();
  const MatrixXd K_star = solve_dare(sys, w).K.K;
  const double radius = P.radius_factor * K_star.norm();
  const double J_star = lqr_cost(sys, w, {K_star});

  const int n_budgets = static_cast<int>(P.budgets.size());
  const int n_methods = static_cast<int>(P.methods.size());
  const int total = n_budgets * cfg.trials;
  std::vector<ModelFreeRow> rows(static_cast<std::size_t>(total) * n_methods);

  parallel_for(total, worker_count(threads), [&](int k) {
    const long budget = P.budgets[k / cfg.trials];
    const int i = k % cfg.trials;
    const std::uint64_t seed = trial_seed(cfg.seed, i);
    const VectorXd theta0 = VectorXd::Zero(nx * nu);
    const std::string tag = "_N" + std::to_string(budget) + "_trial" + std::to_string(i) + ".csv";
    SgdOptions so;
    so.radius = radius;
    so.budget = budget;

    for (int m = 0; m < n_methods; ++m) {
      const std::string& method = P.methods[m];
      double err = kInf;
      std::vector<SgdRow> history;
      if (method == "nominal") {
        if (auto K = nominal_controller(sys, w, budget, P.sigma_u, seed)) {
          err = relative_error(sys, w, *K);
        }
      } else if (method == "lspi") {
        LspiOptions lo;
        lo.iters = P.lspi_iters;
        lo.steps_per_iter = budget / P.lspi_iters;
        lo.sigma_u = P.sigma_u;
        const auto r = lspi(sys, w, MatrixXd::Zero(nu, nx), lo, seed);
        err = relative_error(sys, w, r.K);
        for (std::size_t j = 0; j < r.cost_history.size(); ++j) {
          history.push_back({static_cast<long>(j + 1), static_cast<long>(j + 1) * lo.steps_per_iter,
                             r.cost_history[j], rel(r.cost_history[j], J_star)});
        }
      } else if (method == "pg_simple" || method == "pg_vf") {
        PgOptions po;
        po.horizon = P.rollout_horizon;
        po.sigma = P.pg_sigma;
        po.baseline = method == "pg_vf" ? Baseline::kValueFunction : Baseline::kSimple;
        std::optional<double> previous;
        GradientOracle oracle = [&](const VectorXd& th, std::uint64_t s) {
          PgOptions local = po;
          local.baseline_cost = previous;
          auto e = pg_gradient_estimate(sys, w, th, local, s);
          if (!e.overflow) previous = e.average_cost;
          return e;
        };
        so.step = P.pg_step;
        auto r = sgd_train(oracle, theta0, so, sys, w, seed);
        err = r.history.back().rel_error;
        history = std::move(r.history);
      } else if (method == "dfo") {
        const auto cost = rollout_cost(sys, w, P.rollout_horizon);
        GradientOracle oracle = [&](const VectorXd& th, std::uint64_t s) {
          return dfo_gradient_estimate(cost, th, P.dfo_sigma, P.rollout_horizon, s);
        };
        so.step = P.dfo_step;
        auto r = sgd_train(oracle, theta0, so, sys, w, seed);
        err = r.history.back().rel_error;
        history = std::move(r.history);
      }
      if (history_dir && P.write_histories && !history.empty()) {
        write_history_csv(*history_dir / (method + tag), history);
      }
      rows[static_cast<std::size_t>(k) * n_methods + m] = {method, budget, i, err};
    }
  });

  ModelFreeResult res;
  // Canonical order: method, budget, trial.
  for (int m = 0; m < n_methods; ++m) {
    for (int b = 0; b < n_budgets; ++b) {
      std::vector<double> errs;
      for (int i = 0; i < cfg.trials; ++i) {
        const auto& row = rows[static_cast<std::size_t>(b * cfg.trials + i) * n_methods + m];
        res.rows.push_back(row);
        errs.push_back(row.rel_error);
      }
      res.summary.push_back({P.methods[m], P.budgets[b], quantile(errs, 0.5), quantile(errs, 0.1),
                             quantile(errs, 0.9)});
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

SysidResult run_sysid(const ExperimentConfig& cfg, int threads) {
  const auto& P = cfg.sysid;
  const LinearSystem& sys = cfg.system;
  const int workers = worker_count(threads);
  const sysid::IdentificationSetup setup{sys.A, sys.B, sys.sigma_w, P.sigma_u, P.rollout_horizon};
  const auto bound = sysid::theory_error_bounds(setup, P.rollouts, P.delta);

  SysidResult res;
  res.coverage.resize(cfg.trials);
  parallel_for(cfg.trials, workers, [&](int i) {
    const auto batch = sysid::collect_rollouts(sys, static_cast<int>(P.rollouts), P.rollout_horizon,
                                               P.sigma_u, trial_seed(cfg.seed, i));
    const auto err = sysid::oracle_errors(sysid::estimate_multi_rollout(batch), sys);
    res.coverage[i] = {i, err.eps_A, err.eps_B, bound.eps_A, bound.eps_B,
                       err.eps_A <= bound.eps_A && err.eps_B <= bound.eps_B};
  });
  int covered = 0;
  for (const auto& c : res.coverage) covered += c.covered;
  res.coverage_fraction = static_cast<double>(covered) / cfg.trials;

  const LinearSystem single = presets::system_preset(P.single_system, sys.sigma_w);
  const int n_len = static_cast<int>(P.single_lengths.size());
  res.single.resize(static_cast<std::size_t>(n_len) * cfg.trials);
  parallel_for(n_len * cfg.trials, workers, [&](int k) {
    const long T = P.single_lengths[k / cfg.trials];
    const int i = k % cfg.trials;
    const std::uint64_t seed = trial_seed(cfg.seed, i) ^ (static_cast<std::uint64_t>(T) << 32);
    auto input = std::make_shared<Rng>(seed, 2);
    const double su = P.sigma_u;
    const int nu = single.nu();
    const LqrWeights unit{MatrixXd::Identity(single.nx(), single.nx()), MatrixXd::Identity(nu, nu)};
    const auto traj = simulate(
        single, [input, su, nu](const VectorXd&) { return VectorXd(input->normal_vector(nu, su)); },
        unit, static_cast<int>(T), seed);
    const auto err = sysid::oracle_errors(sysid::estimate_single_trajectory(traj), single);
    res.single[k] = {T, i, std::max(err.eps_A, err.eps_B)};
  });
  std::vector<double> xs, ys;
  for (int b = 0; b < n_len; ++b) {
    std::vector<double> errs;
    for (int i = 0; i < cfg.trials; ++i) errs.push_back(res.single[b * cfg.trials + i].error);
    xs.push_back(static_cast<double>(P.single_lengths[b]));
    ys.push_back(median(errs));
  }
  res.single_slope = xs.size() >= 2 ? loglog_fit(xs, ys).slope : kNaN;
  return res;
}

// ---------------------------------------------------------------------------

TabularResult run_tabular(const ExperimentConfig& cfg, int threads,
                          const std::optional<fs::path>& trace_dir) {
  const auto& P = cfg.tabular;
  const auto& mdp = P.mdp;
  TabularResult res;
  res.g_star = tabular::average_value_iteration(mdp).g(0);
  res.diameter = tabular::diameter(mdp);
  res.envelope = tabular::ucrl2_regret_envelope(res.diameter, mdp.n_states, mdp.n_actions,
                                                static_cast<double>(P.horizon), P.delta);
  res.times = log_times(P.horizon, P.trace_points);

  struct TrialOut {
    std::vector<double> regret;
    int in_set = 0;
    int violations = 0;
  };
  std::vector<TrialOut> out(cfg.trials);
  parallel_for(cfg.trials, worker_count(threads), [&](int i) {
    const auto tr = tabular::ucrl2_run(mdp, P.delta, P.horizon, trial_seed(cfg.seed, i), P.ucrl2);
    if (trace_dir) {
      tabular::write_trace_csv(*trace_dir / ("ucrl2_trial" + std::to_string(i) + ".csv"), tr,
                               res.times);
    }
    for (long t : res.times) out[i].regret.push_back(tr.regret(t));
    for (const auto& e : tr.episodes) {
      if (!e.truth_in_set) continue;
      ++out[i].in_set;
      const double tol = 1.0 / std::sqrt(static_cast<double>(std::max(1L, e.start)));
      if (e.optimistic_gain > tr.g_star + tol) ++out[i].violations;
    }
  });
  for (auto& o : out) {
    res.regret.push_back(std::move(o.regret));
    res.in_set_episodes += o.in_set;
    res.optimism_violations += o.violations;
    res.max_final_regret = std::max(res.max_final_regret, res.regret.back().back());
  }
  const auto b = bands(res.regret, res.times.size());
  res.median = b.median;
  res.p10 = b.p10;
  res.p90 = b.p90;
  res.slope = tail_slope(res.times, res.median, static_cast<double>(P.horizon) / 100.0);
  return res;
}

// ---------------------------------------------------------------------------

CustomResult run_custom(const ExperimentConfig& cfg, int threads) {
  const auto& P = cfg.custom;
  const LinearSystem& sys = cfg.system;
  const LqrWeights& w = cfg.weights;
  const double J_star = lqr_cost(sys, w, solve_dare(sys, w).K);

  CustomResult res;
  res.trials.resize(cfg.trials);
  std::optional<sls::SlsSolution> first;
  parallel_for(cfg.trials, worker_count(threads), [&](int i) {
    CustomTrial t;
    t.trial = i;
    t.ce_rel_cost = kInf;
    t.robust_rel_cost = kInf;
    const auto id = identify(sys, static_cast<int>(P.rollouts), P.rollout_horizon, P.sigma_u,
                             P.eps_source, P.delta, 100, trial_seed(cfg.seed, i));
    if (!id.estimate) {
      t.eps_A = t.eps_B = kInf;
      res.trials[i] = t;
      return;
    }
    const auto& est = *id.estimate;
    t.eps_A = est.eps_A;
    t.eps_B = est.eps_B;
    t.ce_rel_cost = certainty_equivalent(sys, w, est, J_star).rel_cost;
    const auto sol = sls::robust_synthesize(P.sls.problem(est, w));
    t.robust_status = sol.status;
    if (sol.feasible) {
      t.worst_case_bound = sol.worst_case_bound;
      const auto m = sls::cost_under_mismatch(sys, sol.response, est, w, P.sls.freq_grid);
      t.robust_rel_cost = m.stabilizing ? rel(m.cost, J_star) : kInf;
      if (i == 0) first = sol;
    }
    const auto cert = sls::suboptimality_certificate(est.eps_A, est.eps_B, sys, w, P.sls.freq_grid);
    t.certificate = cert.bound;
    t.certificate_product = cert.product;
    t.certificate_applicable = cert.applicable;
    res.trials[i] = t;
  });
  res.first_solution = first;
  return res;
}

// ---------------------------------------------------------------------------

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string_view version() { return REGRETLAB_VERSION; }

namespace {

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  CsvWriter csv(const std::string& name, std::vector<std::string> header) {
    files_.push_back(dir_ / name);
    return CsvWriter(dir_ / name, std::move(header));
  }
  fs::path subdir(const std::string& name) {
    fs::create_directories(dir_ / name);
    return dir_ / name;
  }
  void add(const fs::path& p) { files_.push_back(p); }
  const fs::path& dir() const { return dir_; }
  std::vector<fs::path>& files() { return files_; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

void write_fig1(const ExperimentConfig& cfg, Outputs& out, int threads) {
  const auto r = run_fig1(cfg, threads);
  auto s = out.csv("fig1_summary.csv", {"N", "frac_stable_ce", "frac_stable_robust",
                                        "median_rel_cost_ce", "median_rel_cost_robust"});
  for (const auto& row : r.rows) {
    s.cell(row.N).cell(row.frac_stable_ce).cell(row.frac_stable_robust)
        .cell(row.median_rel_cost_ce).cell(row.median_rel_cost_robust).end_row();
  }
  auto t = out.csv("fig1_trials.csv", {"N", "trial", "eps_A", "eps_B", "ce_stable", "ce_rel_cost",
                                       "robust_status", "robust_stable", "robust_rel_cost",
                                       "gamma", "bound"});
  for (const auto& x : r.trials) {
    t.cell(x.N).cell(x.trial).cell(x.eps_A).cell(x.eps_B).cell(std::string(flag(x.ce_stable)))
        .cell(x.ce_rel_cost).cell(std::string(sls::to_string(x.robust_status)))
        .cell(std::string(flag(x.robust_stable))).cell(x.robust_rel_cost).cell(x.gamma)
        .cell(x.bound).end_row();
  }
}

void write_fig2(const ExperimentConfig& cfg, Outputs& out, int threads) {
  const auto traces = out.subdir("traces");
  const auto r = run_fig2(cfg, threads, traces);
  for (const auto mode : cfg.fig2.methods) {
    for (int i = 0; i < cfg.trials; ++i) {
      const auto p = traces / (std::string(adaptive::to_string(mode)) + "_trial" +
                               std::to_string(i) + ".csv");
      if (fs::exists(p)) out.add(p);
    }
  }
  auto q = out.csv("fig2_quantiles.csv", {"method", "t", "median", "p10", "p90"});
  for (const auto& c : r.methods) {
    for (std::size_t k = 0; k < c.times.size(); ++k) {
      q.cell(std::string(adaptive::to_string(c.method))).cell(c.times[k]).cell(c.median[k])
          .cell(c.p10[k]).cell(c.p90[k]).end_row();
    }
  }
  auto s = out.csv("fig2_summary.csv",
                   {"method", "trials", "skipped", "slope", "median_final_regret",
                    "p10_final_regret", "p90_final_regret", "median_final_error",
                    "infeasible_epochs", "resets", "unstable_epochs"});
  for (const auto& c : r.methods) {
    const bool any = !c.regret.empty();
    s.cell(std::string(adaptive::to_string(c.method))).cell(static_cast<int>(c.regret.size()))
        .cell(r.skipped_trials).cell(c.slope).cell(any ? c.median.back() : kNaN)
        .cell(any ? c.p10.back() : kNaN).cell(any ? c.p90.back() : kNaN)
        .cell(median_or_nan(c.final_error)).cell(c.infeasible_epochs).cell(c.resets)
        .cell(c.unstable_epochs).end_row();
  }
  auto e = out.csv("fig2_epochs.csv", {"method", "run", "epoch", "end", "error"});
  for (const auto& c : r.methods) {
    for (std::size_t i = 0; i < c.epoch_ends.size(); ++i) {
      for (std::size_t k = 0; k < c.epoch_ends[i].size(); ++k) {
        e.cell(std::string(adaptive::to_string(c.method))).cell(static_cast<long>(i))
            .cell(static_cast<long>(k)).cell(c.epoch_ends[i][k]).cell(c.epoch_error[i][k])
            .end_row();
      }
    }
  }
}

void write_model_free(const ExperimentConfig& cfg, Outputs& out, int threads) {
  std::optional<fs::path> hist;
  if (cfg.model_free.write_histories) hist = out.subdir("histories");
  const auto r = run_model_free(cfg, threads, hist);
  if (hist) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(*hist)) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.add(f);
  }
  auto s = out.csv("model_free_summary.csv", {"method", "budget", "median", "p10", "p90"});
  for (const auto& x : r.summary) {
    s.cell(x.method).cell(x.budget).cell(x.median).cell(x.p10).cell(x.p90).end_row();
  }
  auto t = out.csv("model_free_trials.csv", {"method", "budget", "trial", "rel_error"});
  for (const auto& x : r.rows) t.cell(x.method).cell(x.budget).cell(x.trial).cell(x.rel_error).end_row();
}

void write_sysid(const ExperimentConfig& cfg, Outputs& out, int threads) {
  const auto r = run_sysid(cfg, threads);
  auto c = out.csv("sysid_coverage.csv", {"trial", "err_A", "err_B", "eps_A", "eps_B", "covered"});
  for (const auto& x : r.coverage) {
    c.cell(x.trial).cell(x.err_A).cell(x.err_B).cell(x.eps_A).cell(x.eps_B)
        .cell(std::string(flag(x.covered))).end_row();
  }
  auto s = out.csv("sysid_single.csv", {"T", "trial", "error"});
  for (const auto& x : r.single) s.cell(x.T).cell(x.trial).cell(x.error).end_row();
  auto m = out.csv("sysid_summary.csv", {"rollouts", "delta", "coverage", "single_slope"});
  m.cell(cfg.sysid.rollouts).cell(cfg.sysid.delta).cell(r.coverage_fraction).cell(r.single_slope)
      .end_row();
}

void write_tabular(const ExperimentConfig& cfg, Outputs& out, int threads) {
  const auto traces = out.subdir("traces");
  const auto r = run_tabular(cfg, threads, traces);
  for (int i = 0; i < cfg.trials; ++i) out.add(traces / ("ucrl2_trial" + std::to_string(i) + ".csv"));
  auto q = out.csv("tabular_quantiles.csv", {"t", "median", "p10", "p90"});
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    q.cell(r.times[k]).cell(r.median[k]).cell(r.p10[k]).cell(r.p90[k]).end_row();
  }
  auto s = out.csv("tabular_summary.csv",
                   {"mdp", "trials", "g_star", "diameter", "envelope", "slope",
                    "median_final_regret", "max_final_regret", "in_set_episodes",
                    "optimism_violations"});
  s.cell(cfg.tabular.mdp_name).cell(cfg.trials).cell(r.g_star).cell(r.diameter).cell(r.envelope)
      .cell(r.slope).cell(r.median.back()).cell(r.max_final_regret).cell(r.in_set_episodes)
      .cell(r.optimism_violations).end_row();
}

void write_custom(const ExperimentConfig& cfg, Outputs& out, int threads) {
  const auto r = run_custom(cfg, threads);
  auto t = out.csv("custom_trials.csv",
                   {"trial", "eps_A", "eps_B", "ce_rel_cost", "robust_status", "robust_rel_cost",
                    "worst_case_bound", "certificate", "certificate_product",
                    "certificate_applicable"});
  for (const auto& x : r.trials) {
    t.cell(x.trial).cell(x.eps_A).cell(x.eps_B).cell(x.ce_rel_cost)
        .cell(std::string(sls::to_string(x.robust_status))).cell(x.robust_rel_cost)
        .cell(x.worst_case_bound).cell(x.certificate).cell(x.certificate_product)
        .cell(std::string(flag(x.certificate_applicable))).end_row();
  }
  if (r.first_solution) {
    const auto p = out.dir() / "sls_solution.json";
    std::ofstream(p) << sls::to_json(*r.first_solution).dump(2) << '\n';
    out.add(p);
  }
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  Outputs out(cfg.output_dir);
  switch (cfg.kind) {
    case Kind::kFig1Stability: write_fig1(cfg, out, threads); break;
    case Kind::kFig2Regret: write_fig2(cfg, out, threads); break;
    case Kind::kModelFree: write_model_free(cfg, out, threads); break;
    case Kind::kSysidCoverage: write_sysid(cfg, out, threads); break;
    case Kind::kTabularRegret: write_tabular(cfg, out, threads); break;
    case Kind::kCustom: write_custom(cfg, out, threads); break;
  }
  RunReport rep;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.config_hash = config_hash(cfg.source);
  rep.files = out.files();

  json files = json::array();
  for (const auto& f : rep.files) files.push_back(fs::relative(f, cfg.output_dir).generic_string());
  json manifest{
      {"kind", std::string(to_string(cfg.kind))},
      {"config_hash", rep.config_hash},
      {"config", cfg.source},
      {"seed", cfg.seed},
      {"trials", cfg.trials},
      {"wall_time_s", rep.wall_time},
      {"files", files},
      {"versions",
       {{"regretlab", std::string(version())},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                      "." + std::to_string(EIGEN_MINOR_VERSION)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"compiler", __VERSION__}}},
  };
  const auto mp = fs::path(cfg.output_dir) / "manifest.json";
  std::ofstream(mp) << manifest.dump(2) << '\n';
  rep.files.push_back(mp);
  return rep;
}

}  // namespace regretlab::experiment
