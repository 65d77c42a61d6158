#include "regretlab/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "regretlab/csv.hpp"
#include "regretlab/error.hpp"
#include "regretlab/rng.hpp"
#include "regretlab/stats.hpp"

namespace regretlab::adaptive {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stateful evaluation of a Controller along one trajectory.
class Actor {
 public:
  explicit Actor(const Controller& c) { set(c); }

  void set(const Controller& c) {
    controller_ = c;
    fir_.reset();
    if (c.response) fir_.emplace(*c.response);
  }

  VectorXd operator()(const VectorXd& x) {
    if (fir_) return fir_->step(x);
    return controller_.K * x;
  }

 private:
  Controller controller_;
  std::optional<sls::FirControllerState> fir_;
};

double heuristic_radius(const sysid::RegressionAccumulator& acc, double sigma_w, double delta) {
  const int nx = acc.nx();
  const int nu = acc.nu();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(acc.gram(), Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues()(0);
  if (!(lmin > 0.0)) return std::numeric_limits<double>::infinity();
  return 8.0 * sigma_w * std::sqrt((2.0 * nx + nu) * std::log(54.0 / delta) / lmin);
}

RegretTrace run(const LinearSystem& sys, const LqrWeights& w, const AdaptiveConfig& cfg,
                Mode mode) {
  sys.validate();
  w.validate(sys.nx(), sys.nu());
  cfg.validate(sys.nx(), sys.nu());
  const int nx = sys.nx();
  const int nu = sys.nu();

  RegretTrace trace;
  trace.J_star = lqr_cost(sys, w, solve_dare(sys, w).K);
  trace.cost.reserve(cfg.total_steps);
  trace.cum_cost.reserve(cfg.total_steps);
  trace.epoch_of.reserve(cfg.total_steps);

  sysid::RegressionAccumulator acc(nx, nu);
  std::vector<sysid::Transition> pooled;
  const bool keep_data = cfg.eps_source == sysid::ErrorSource::kBootstrap;
  for (const auto& tr : cfg.warmup) {
    acc.add(tr.x, tr.u, tr.x_next);
    if (keep_data) pooled.push_back(tr);
  }

  Rng noise(cfg.seed, 1);
  Rng explore(cfg.seed, 2);
  const double exponent = cfg.exponent();

  Controller current = cfg.initial;
  Actor actor(current);
  double eps_A = kNaN;
  double eps_B = kNaN;
  bool current_stable = cfg.initial.closed_loop_radius(sys) < 1.0;

  VectorXd x = VectorXd::Zero(nx);
  double cum = 0.0;
  long t = 0;
  for (int i = 0; t < cfg.total_steps; ++i) {
    EpochRecord rec;
    rec.index = i;
    rec.start = t;
    const long planned = cfg.C_T * (1L << std::min(i, 40));
    rec.length = std::min(planned, cfg.total_steps - t);
    rec.sigma_eta2 = cfg.C_eta * std::pow(static_cast<double>(planned), exponent);
    rec.eps_A = eps_A;
    rec.eps_B = eps_B;
    rec.stable = current_stable;
    const double sigma_eta = std::sqrt(rec.sigma_eta2);

    for (long s = 0; s < rec.length; ++s, ++t) {
      VectorXd u = actor(x) + explore.normal_vector(nu, sigma_eta);
      const double c = x.dot(w.Q * x) + u.dot(w.R * u);
      VectorXd x_next = sys.A * x + sys.B * u + noise.normal_vector(nx, sys.sigma_w);
      acc.add(x, u, x_next);
      if (keep_data) pooled.push_back({x, u, x_next});
      cum += c;
      trace.cost.push_back(c);
      trace.cum_cost.push_back(cum);
      trace.epoch_of.push_back(i);
      x = std::move(x_next);
      if (!(x.lpNorm<Eigen::Infinity>() <= cfg.blowup_bound) && !rec.reset) {
        rec.reset = true;
        rec.stable = false;
        current = cfg.initial;
        actor.set(current);
        current_stable = cfg.initial.closed_loop_radius(sys) < 1.0;
      }
    }

    // Refit on everything seen so far.
    sysid::ModelEstimate est;
    try {
      est = acc.solve();
    } catch (const Error&) {
      rec.infeasible = true;
      trace.epochs.push_back(std::move(rec));
      continue;
    }
    const sysid::ErrorBounds err = sysid::oracle_errors(est, sys);
    switch (cfg.eps_source) {
      case sysid::ErrorSource::kOracleTrue:
        est.eps_A = err.eps_A;
        est.eps_B = err.eps_B;
        break;
      case sysid::ErrorSource::kTheoryBound:
        est.eps_A = est.eps_B = heuristic_radius(acc, sys.sigma_w, cfg.delta);
        break;
      case sysid::ErrorSource::kBootstrap: {
        sysid::RolloutBatch batch;
        batch.transitions = pooled;
        const auto b = sysid::bootstrap_error_bounds(batch, est, cfg.bootstrap_resamples,
                                                     cfg.delta, cfg.seed ^ (0x5eedULL << 32 | i));
        est.eps_A = b.eps_A;
        est.eps_B = b.eps_B;
        break;
      }
    }
    est.provenance = cfg.eps_source;
    rec.A_hat = est.A_hat;
    rec.B_hat = est.B_hat;
    rec.fit_eps_A = est.eps_A;
    rec.fit_eps_B = est.eps_B;
    rec.err_A = err.eps_A;
    rec.err_B = err.eps_B;
    trace.final_err_A = err.eps_A;
    trace.final_err_B = err.eps_B;

    if (t < cfg.total_steps) {
      std::optional<Controller> next;
      if (mode == Mode::kRobustSls) {
        sls::SlsProblem prob = cfg.synthesis;
        prob.estimate = est;
        prob.weights = w;
        const sls::SlsSolution sol = sls::robust_synthesize(prob);
        if (sol.feasible) next = Controller::from_response(sol.response);
      } else {
        try {
          const DareSolution ce = solve_dare(est.as_system(sys.sigma_w), w);
          next = Controller::static_gain(ce.K.K);
        } catch (const Error&) {
        }
      }
      if (next) {
        current = std::move(*next);
        actor.set(current);
        current_stable = current.closed_loop_radius(sys) < 1.0;
        eps_A = est.eps_A;
        eps_B = est.eps_B;
      } else {
        rec.infeasible = true;
      }
    }
    trace.epochs.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace

std::string_view to_string(Mode mode) {
  return mode == Mode::kRobustSls ? "robust" : "ce";
}

Controller Controller::static_gain(const MatrixXd& K) {
  Controller c;
  c.K = K;
  return c;
}

Controller Controller::from_response(const FirResponse& resp) {
  Controller c;
  c.K = resp.taps_u.at(0);
  c.response = resp;
  return c;
}

double Controller::closed_loop_radius(const LinearSystem& sys) const {
  if (response) return spectral_radius(sls::closed_loop_matrix(sys, sls::realize_controller(*response)));
  return spectral_radius(sys.A + sys.B * K);
}

double AdaptiveConfig::exponent() const {
  if (exploration_exponent) return *exploration_exponent;
  return mode == Mode::kRobustSls ? -1.0 / 3.0 : -1.0 / 2.0;
}

void AdaptiveConfig::validate(int nx, int nu) const {
  require(C_T >= nx + nu, "C_T must be at least n_x + n_u");
  require(C_eta > 0.0, "C_eta must be positive");
  require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
  require(total_steps >= 1, "total_steps must be positive");
  require(blowup_bound > 0.0, "blowup_bound must be positive");
  require(bootstrap_resamples >= 1, "bootstrap_resamples must be positive");
  if (initial.response) {
    require(initial.response->nx() == nx && initial.response->nu() == nu,
            "initial controller response has the wrong dimensions");
  } else {
    require(initial.K.rows() == nu && initial.K.cols() == nx,
            "initial gain must be n_u x n_x");
  }
  for (const auto& tr : warmup) {
    require(tr.x.size() == nx && tr.u.size() == nu && tr.x_next.size() == nx,
            "warm-up transition has the wrong dimensions");
  }
}

double regret_of(const RegretTrace& trace, long t) {
  require(t >= 0 && t < trace.length(), "regret_of: t outside the trace");
  return trace.cum_cost[t] - static_cast<double>(t) * trace.J_star;
}

RegretTrace run_robust_adaptive(const LinearSystem& sys, const LqrWeights& w,
                                const AdaptiveConfig& cfg) {
  return run(sys, w, cfg, Mode::kRobustSls);
}

RegretTrace run_ce_adaptive(const LinearSystem& sys, const LqrWeights& w,
                            const AdaptiveConfig& cfg) {
  return run(sys, w, cfg, Mode::kCertaintyEquivalent);
}

RegretTrace run_adaptive(const LinearSystem& sys, const LqrWeights& w, const AdaptiveConfig& cfg) {
  return run(sys, w, cfg, cfg.mode);
}

std::vector<long> trace_sample_times(const RegretTrace& trace, int points) {
  const long T = trace.length();
  std::vector<long> out;
  if (T == 0) return out;
  out.push_back(0);
  if (T > 2 && points > 0) {
    for (double v : logspace(1.0, static_cast<double>(T - 1), points)) {
      out.push_back(std::clamp(std::lround(v), 1L, T - 1));
    }
  }
  for (const auto& e : trace.epochs) {
    if (e.start < T) out.push_back(e.start);
    if (e.start > 0) out.push_back(e.start - 1);
  }
  out.push_back(T - 1);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const RegretTrace& trace,
                     const std::vector<long>& times) {
  CsvWriter csv(path, {"t", "cum_cost", "regret", "epoch", "sigma_eta2", "eps_A", "eps_B",
                       "stable_flag"});
  auto row = [&](long t) {
    const auto& e = trace.epochs.at(trace.epoch_of[t]);
    csv.cell(t)
        .cell(trace.cum_cost[t])
        .cell(regret_of(trace, t))
        .cell(e.index)
        .cell(e.sigma_eta2)
        .cell(e.eps_A)
        .cell(e.eps_B)
        .cell(e.stable ? 1 : 0);
    csv.end_row();
  };
  if (times.empty()) {
    for (long t = 0; t < trace.length(); ++t) row(t);
  } else {
    for (long t : times) row(t);
  }
}

}  // namespace regretlab::adaptive
