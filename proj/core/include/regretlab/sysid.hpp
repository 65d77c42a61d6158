#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regretlab/lti.hpp"

namespace regretlab::sysid {

// Where the uncertainty radii of an estimate come from.
enum class ErrorSource { kTheoryBound, kOracleTrue, kBootstrap };

std::string_view to_string(ErrorSource source);
ErrorSource parse_error_source(std::string_view name);

struct ModelEstimate {
  MatrixXd A_hat;
  MatrixXd B_hat;
  double eps_A = 0.0;  // bound on ||A_hat - A||_2
  double eps_B = 0.0;  // bound on ||B_hat - B||_2
  ErrorSource provenance = ErrorSource::kTheoryBound;
  long samples = 0;    // rollouts N or trajectory length T

  LinearSystem as_system(double sigma_w) const { return {A_hat, B_hat, sigma_w}; }
};

struct Transition {
  VectorXd x;
  VectorXd u;
  VectorXd x_next;
};

// Final-step triples (x_T, u_T, x_{T+1}) of N independent rollouts, or every
// step of each rollout in order when all_steps is set.
struct RolloutBatch {
  int horizon = 0;
  double sigma_u = 1.0;
  bool all_steps = false;
  std::vector<Transition> transitions;

  std::size_t size() const { return transitions.size(); }
};

// N rollouts from x_0 = 0 under u_t ~ N(0, sigma_u^2 I); keeps only the last
// transition of each rollout unless all_steps is set. The noise draws are
// the same either way.
RolloutBatch collect_rollouts(const LinearSystem& sys, int N, int T, double sigma_u,
                              std::uint64_t seed, bool all_steps = false);

struct LeastSquaresOptions {
  bool ridge_fallback = false;  // only used when the Gram matrix is singular
  double ridge_lambda = 0.0;
};

// Streaming sufficient statistics for regressing x_{t+1} on [x_t; u_t].
class RegressionAccumulator {
 public:
  RegressionAccumulator(int nx, int nu);

  void add(const VectorXd& x, const VectorXd& u, const VectorXd& x_next);
  long count() const { return count_; }
  int nx() const { return nx_; }
  int nu() const { return nu_; }
  const MatrixXd& gram() const { return gram_; }

  // Ordinary least squares. Throws RankDeficient when fewer than nx + nu
  // samples were added or the Gram matrix is numerically singular, unless
  // the ridge fallback is enabled.
  ModelEstimate solve(const LeastSquaresOptions& options = {}) const;

 private:
  int nx_;
  int nu_;
  long count_ = 0;
  MatrixXd gram_;   // sum z z'
  MatrixXd cross_;  // sum z x_next'
};

ModelEstimate estimate_transitions(std::span<const Transition> data, int nx, int nu,
                                   const LeastSquaresOptions& options = {});
ModelEstimate estimate_multi_rollout(const RolloutBatch& batch,
                                     const LeastSquaresOptions& options = {});
// Least squares over all T transitions of one trajectory.
ModelEstimate estimate_single_trajectory(const Trajectory& traj,
                                         const LeastSquaresOptions& options = {});

struct ErrorBounds {
  double eps_A = 0.0;
  double eps_B = 0.0;
};

struct IdentificationSetup {
  MatrixXd A;
  MatrixXd B;
  double sigma_w = 1.0;
  double sigma_u = 1.0;
  int horizon = 0;  // rollout horizon T
};

// sigma_u^2 sum_{t=0}^T A^t B B' A'^t + sigma_w^2 sum_{t=0}^T A^t A'^t.
MatrixXd finite_gramian(const IdentificationSetup& setup);
// Smallest N accepted by theory_error_bounds: 24 (n_x + n_u) log(54 / delta).
double theory_min_rollouts(int nx, int nu, double delta);
// The bound arithmetic alone, without the sample-size precondition.
ErrorBounds theory_bound_values(const IdentificationSetup& setup, long N, double delta);
// High-probability (1 - delta) spectral-norm error bounds for the multi-rollout
// estimator. Throws PreconditionN when N is below theory_min_rollouts and
// SingularGramian when lambda_min of the Gramian is not positive.
ErrorBounds theory_error_bounds(const IdentificationSetup& setup, long N, double delta);

// Measured spectral errors against the true system.
ErrorBounds oracle_errors(const ModelEstimate& estimate, const LinearSystem& truth);

// Resamples rollouts with replacement and reports the (1 - delta) quantile of
// the spectral deviation from the point estimate.
ErrorBounds bootstrap_error_bounds(const RolloutBatch& batch, const ModelEstimate& point,
                                   int resamples, double delta, std::uint64_t seed);

// CSV columns: rollout_id, t, x_0.., u_0..; inputs of terminal states are nan.
void write_rollouts_csv(const std::filesystem::path& path, const RolloutBatch& batch);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

}  // namespace regretlab::sysid
