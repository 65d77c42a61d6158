#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "regretlab/lti.hpp"

namespace regretlab::model_free {

// Relative Q-function z'Hz, z = [x; u], stored as weights over the monomials
// z_i z_j (i <= j, row by row). Off-diagonal weights carry 2 H_ij.
struct QuadraticQ {
  MatrixXd H;
  VectorXd w;
  double lambda = 0.0;

  static QuadraticQ from_weights(const VectorXd& w, int nx, int nu, double lambda = 0.0);
  static QuadraticQ from_matrix(const MatrixXd& H, double lambda = 0.0);
  double operator()(const VectorXd& x, const VectorXd& u) const;
  // argmin_u: -H_uu^{-1} H_ux; nullopt when H_uu is not positive definite.
  std::optional<MatrixXd> greedy_gain(int nx) const;
};

int feature_count(int dim);
VectorXd quadratic_features(const VectorXd& z);

// Analytic H of policy K: [[S + A'VA, A'VB], [B'VA, R + B'VB]], V = dlyap(A+BK, S+K'RK).
MatrixXd analytic_q_matrix(const LinearSystem& sys, const LqrWeights& w, const MatrixXd& K);

// LSTD-Q from transitions (x_t, u_t, c_t, x_{t+1}) of `data`. Throws
// DegenerateFeatures when the system matrix loses rank.
QuadraticQ lstdq(const Trajectory& data, const MatrixXd& K, double lambda_hat,
                 double rank_tol = 1e-10);
// Same estimator with lambda fitted jointly: a constant regressor is appended
// to phi_t - psi_{t+1} and to the instruments.
QuadraticQ lstdq_joint(const Trajectory& data, const MatrixXd& K, double rank_tol = 1e-10);

struct LspiOptions {
  int iters = 10;
  long steps_per_iter = 1000;
  double sigma_u = 1.0;    // behavior noise u = K x + N(0, sigma_u^2 I)
  bool joint_lambda = true;  // false: lambda_hat is the empirical mean cost of the data
  double blowup_bound = 1e8;
};

struct LspiResult {
  MatrixXd K;                 // last stabilizing iterate
  int improvements = 0;       // accepted updates
  int unstable_updates = 0;   // H_uu indefinite or the new gain destabilizes the plant
  long samples_used = 0;
  std::vector<double> cost_history;  // lqr_cost after each iteration
};

LspiResult lspi(const LinearSystem& sys, const LqrWeights& w, const MatrixXd& K0,
                const LspiOptions& options, std::uint64_t seed);

// theta = vec(K), column-major.
VectorXd vec(const MatrixXd& K);
MatrixXd unvec(const VectorXd& theta, int nu, int nx);

enum class Baseline { kSimple, kValueFunction };
std::string_view to_string(Baseline b);

struct PgOptions {
  long horizon = 1000;       // T
  double sigma = 1.0;        // action-space exploration std
  Baseline baseline = Baseline::kSimple;
  // Per-step constant of both baselines, normally the previous iterate's
  // average cost. Unset: this rollout's own average.
  std::optional<double> baseline_cost;
  double blowup_bound = 1e8;
};

struct GradientEstimate {
  VectorXd g;            // empty when the rollout overflowed
  double average_cost = 0.0;
  long samples = 0;
  bool overflow = false;
};

// REINFORCE estimate (1/T) sum_t (c(tau_{t:T}) - b_t) / sigma^2 vec(eta_t x_t').
// The simple baseline is (T - t + 1) baseline_cost; the value-function
// baseline adds x_t'Vx_t with V from the true model.
GradientEstimate pg_gradient_estimate(const LinearSystem& sys, const LqrWeights& w,
                                      const VectorXd& theta, const PgOptions& options,
                                      std::uint64_t seed);

// Average cost of one rollout of length T; the seed fixes the noise so two
// calls with the same seed share it.
using CostEval = std::function<std::optional<double>(const VectorXd& theta, std::uint64_t seed)>;

CostEval rollout_cost(const LinearSystem& sys, const LqrWeights& w, long horizon,
                      double blowup_bound = 1e8);

// Two-point estimate (J(theta + sigma xi) - J(theta - sigma xi)) / (2 sigma) xi
// with both rollouts on common noise.
GradientEstimate dfo_gradient_estimate(const CostEval& cost, const VectorXd& theta,
                                       double sigma, long horizon, std::uint64_t seed);

struct SgdOptions {
  double step = 1e-4;      // mu
  double radius = 0.0;     // spectral-norm ball for mat(theta); 0 disables
  long budget = 100000;    // simulation steps
  long max_iters = 1000000;
};

struct SgdRow {
  long iteration = 0;
  long samples_used = 0;
  double J_theta = 0.0;
  double rel_error = 0.0;
};

struct SgdResult {
  VectorXd theta;
  std::vector<SgdRow> history;
  int sentinel_iters = 0;   // overflowed estimates, previous iterate restored
};

using GradientOracle = std::function<GradientEstimate(const VectorXd& theta, std::uint64_t seed)>;

// theta <- Proj(theta - mu g) until the sample budget is spent. History rows
// use the true cost for plotting only.
SgdResult sgd_train(const GradientOracle& estimator, const VectorXd& theta0,
                    const SgdOptions& options, const LinearSystem& sys, const LqrWeights& w,
                    std::uint64_t seed);

MatrixXd project_spectral_ball(const MatrixXd& K, double radius);

// Model-based reference: least squares on one trajectory of `samples` steps
// driven by u ~ N(0, sigma_u^2 I), then the Riccati gain of the estimate.
// nullopt when the estimate admits no stabilizing Riccati solution.
std::optional<MatrixXd> nominal_controller(const LinearSystem& sys, const LqrWeights& w,
                                           long samples, double sigma_u, std::uint64_t seed);

// (J(K) - J*) / J*; +inf when K does not stabilize.
double relative_error(const LinearSystem& sys, const LqrWeights& w, const MatrixXd& K);

void write_history_csv(const std::filesystem::path& path, const std::vector<SgdRow>& rows);

}  // namespace regretlab::model_free
