#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "regretlab/lti.hpp"
#include "regretlab/sls.hpp"
#include "regretlab/sysid.hpp"

namespace regretlab::adaptive {

enum class Mode { kRobustSls, kCertaintyEquivalent };
std::string_view to_string(Mode mode);

// Either a static gain or an FIR system response run through its SLS
// realization.
struct Controller {
  MatrixXd K;
  std::optional<FirResponse> response;

  static Controller static_gain(const MatrixXd& K);
  static Controller from_response(const FirResponse& resp);
  // Spectral radius of the true closed loop.
  double closed_loop_radius(const LinearSystem& sys) const;
};

struct AdaptiveConfig {
  Mode mode = Mode::kRobustSls;
  Controller initial;                 // must stabilize the true system
  std::vector<sysid::Transition> warmup;  // optional data seeding the estimator
  double delta = 0.05;
  long C_T = 100;
  double C_eta = 1.0;
  std::optional<double> exploration_exponent;  // default -1/3 robust, -1/2 CE
  long total_steps = 100000;
  std::uint64_t seed = 0;
  sysid::ErrorSource eps_source = sysid::ErrorSource::kOracleTrue;
  int bootstrap_resamples = 50;
  sls::SlsProblem synthesis;          // horizon, alpha, grids, solver options
  double blowup_bound = 1e6;

  double exponent() const;
  void validate(int nx, int nu) const;
};

struct EpochRecord {
  int index = 0;
  long start = 0;
  long length = 0;
  double sigma_eta2 = 0.0;
  double eps_A = 0.0;     // radii behind the controller in force (nan: initial)
  double eps_B = 0.0;
  bool stable = true;     // controller in force stabilizes the true system
  bool reset = false;     // state blew up, reverted to the initial controller
  // Fit on all data up to the end of the epoch, and what it led to.
  MatrixXd A_hat;
  MatrixXd B_hat;
  double fit_eps_A = 0.0;
  double fit_eps_B = 0.0;
  double err_A = 0.0;     // true spectral errors of the fit
  double err_B = 0.0;
  bool infeasible = false;  // no new controller from this fit, previous one kept
};

struct RegretTrace {
  double J_star = 0.0;
  std::vector<double> cost;      // per-step cost, t = 0..T-1
  std::vector<double> cum_cost;  // sum_{s<=t} cost_s
  std::vector<int> epoch_of;     // epoch index per step
  std::vector<EpochRecord> epochs;
  double final_err_A = 0.0;      // spectral error of the last estimate
  double final_err_B = 0.0;

  long length() const { return static_cast<long>(cost.size()); }
};

// Sum_{s=0}^t cost_s - t J_star.
double regret_of(const RegretTrace& trace, long t);

// Epoch-doubling robust adaptive control: epoch i lasts C_T 2^i steps with
// exploration variance C_eta T_i^{-1/3}; after each epoch the pooled data is
// re-fit and a new controller is synthesized by robust SLS.
RegretTrace run_robust_adaptive(const LinearSystem& sys, const LqrWeights& w,
                                const AdaptiveConfig& cfg);
// Same schedule with exponent -1/2 and the Riccati controller of the estimate.
RegretTrace run_ce_adaptive(const LinearSystem& sys, const LqrWeights& w,
                            const AdaptiveConfig& cfg);
RegretTrace run_adaptive(const LinearSystem& sys, const LqrWeights& w, const AdaptiveConfig& cfg);

// Rows at the given times (all steps when empty): t, cum_cost, regret, epoch,
// sigma_eta2, eps_A, eps_B, stable_flag.
void write_trace_csv(const std::filesystem::path& path, const RegretTrace& trace,
                     const std::vector<long>& times = {});
// log-spaced sample times in [1, T - 1] plus every epoch boundary.
std::vector<long> trace_sample_times(const RegretTrace& trace, int points);

}  // namespace regretlab::adaptive
