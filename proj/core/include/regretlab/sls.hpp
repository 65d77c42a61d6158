#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <unsupported/Eigen/FFT>
#include <nlohmann/json.hpp>

#include "regretlab/lti.hpp"
#include "regretlab/sysid.hpp"

namespace regretlab::sls {

struct AchievabilityResidual {
  double init = 0.0;          // ||Phi_x[1] - I||_F
  std::vector<double> steps;  // ||Phi_x[k+1] - A Phi_x[k] - B Phi_u[k]||_F, k = 1..F-1
  double terminal = 0.0;      // ||A Phi_x[F] + B Phi_u[F]||_F

  double max_equality() const;
};

AchievabilityResidual achievability_residual(const FirResponse& resp, const MatrixXd& A_hat,
                                             const MatrixXd& B_hat);

// H-infinity norm (grid) of [eps_A / sqrt(alpha) Phi_x; eps_B / sqrt(1 - alpha) Phi_u].
double h_alpha(const FirResponse& resp, double eps_A, double eps_B, double alpha,
               int grid_size = kDefaultFreqGrid);

// 1 - gamma log-spaced from 1 down to 1 - top, so the grid runs from 0 to top
// and is densest near 1.
std::vector<double> default_gamma_grid(int points = 20, double top = 0.995);

struct InnerSolverOptions {
  int max_iter = 20000;
  double primal_tol = 1e-6;       // max over the grid of ||S(w) - Y(w)||_F
  double objective_rtol = 1e-8;   // relative change of the squared H2 objective
  double rho = 1.0;               // initial penalty
  double relaxation = 1.6;        // over-relaxation of the frequency-domain update
  int synthesis_grid = 0;         // 0 selects the next power of two >= 4F
  int stall_window = 400;         // iterations without primal progress before giving up
};

struct SlsProblem {
  sysid::ModelEstimate estimate;
  LqrWeights weights;
  int horizon = 64;
  double alpha = 0.5;
  std::vector<double> gamma_grid = default_gamma_grid();
  int freq_grid = kDefaultFreqGrid;
  double eps_V = 1e-4;        // terminal residual tolerance
  double fold_factor = 1.0;   // terminal residual weight in the H-infinity budget
  bool densify = true;
  int max_horizon = 256;      // cap for the horizon-doubling retry
  InnerSolverOptions inner;

  void validate() const;
};

enum class SlsStatus { kFeasible, kInfeasible, kInnerSolverStall };
std::string_view to_string(SlsStatus status);

// State-space realization of K = Phi_u Phi_x^{-1}:
//   xi+ = Ak xi + Bk x,  u = Ck xi + Dk x,
// with xi stacking the last F-1 innovations delta_t = x_t - (z Phi_x - I) delta.
struct SlsController {
  MatrixXd Ak;
  MatrixXd Bk;
  MatrixXd Ck;
  MatrixXd Dk;

  int order() const { return static_cast<int>(Ak.rows()); }
};

SlsController realize_controller(const FirResponse& resp);

// Closed loop of (A, B) with the realized controller; state (x, xi).
MatrixXd closed_loop_matrix(const LinearSystem& sys, const SlsController& K);

// Runs the same controller online from a ring buffer of innovations, in
// O(F (n_x + n_u) n_x) per step instead of a dense state update.
class FirControllerState {
 public:
  explicit FirControllerState(FirResponse resp);

  VectorXd step(const VectorXd& x);
  void reset();

 private:
  FirResponse resp_;
  std::vector<VectorXd> delta_;  // delta_{t-1}, delta_{t-2}, ... in ring order
  int head_ = 0;
};

struct SlsSolution {
  FirResponse response;
  SlsController controller;
  double gamma_used = 0.0;        // certified H_alpha, plus folded terminal slack
  double nominal_h2 = 0.0;
  double worst_case_bound = 0.0;  // nominal_h2 / (1 - gamma_used)
  bool feasible = false;
  SlsStatus status = SlsStatus::kInfeasible;
  double gamma_lower_bound = 0.0;
  int inner_solves = 0;
  int stalled_solves = 0;
  std::string message;
};

// Grid search over gamma of the robust LQR program on the FIR horizon. Never
// throws for infeasible data; the status field reports the outcome.
SlsSolution robust_synthesize(const SlsProblem& prob);

// One instance of the inner convex problem on a fixed horizon. Exposed so the
// gamma scan can warm start and so tests can probe the value function.
class InnerSolver {
 public:
  InnerSolver(const MatrixXd& A_hat, const MatrixXd& B_hat, const LqrWeights& w, int horizon,
              double scale_x, double scale_u, const InnerSolverOptions& options = {});

  struct Result {
    FirResponse response;
    double h2 = 0.0;
    int iterations = 0;
    bool converged = false;
    double primal_residual = 0.0;
  };

  // Minimizes the H2 objective subject only to achievability.
  Result solve_unconstrained();
  // Adds the grid constraint ||[scale_x Phi_x; scale_u Phi_u](w)|| <= gamma.
  // Warm starts from the previous call.
  Result solve(double gamma);
  // Lower bound on the H-infinity norm of the scaled response over every
  // achievable FIR response: max over columns of the minimal column energy.
  double hinf_lower_bound() const;

  int horizon() const { return F_; }
  int grid() const { return grid_; }

 private:
  void factor(double rho);
  MatrixXd solve_taps(const MatrixXd& Tx, const MatrixXd& Tu, double beta) const;
  FirResponse unpack(const MatrixXd& U) const;
  MatrixXd states(const MatrixXd& U) const;
  double objective(const MatrixXd& U, const MatrixXd& X) const;
  void transform(const MatrixXd& U, const MatrixXd& X, Eigen::MatrixXcd& out);
  void targets(MatrixXd& Tx, MatrixXd& Tu);
  void project(Eigen::Ref<Eigen::VectorXcd> column, double gamma) const;

  MatrixXd A_;
  MatrixXd B_;
  LqrWeights w_;
  int F_;
  int n_;
  int m_;
  double sx_;
  double su_;
  InnerSolverOptions opt_;
  int grid_;

  MatrixXd gamma_;     // F n x F m, maps input taps to state taps
  MatrixXd chi_;       // F n x n, open-loop state taps
  MatrixXd psi_;       // n x F m, terminal map
  MatrixXd terminal_;  // A^F
  MatrixXd gqg_, gg_, gqx_, gx_;

  double factored_rho_ = -1.0;
  Eigen::LLT<MatrixXd> h_llt_;
  MatrixXd h_inv_psi_t_;
  Eigen::LDLT<MatrixXd> schur_;

  // ADMM state carried between solve() calls.
  bool warm_ = false;
  double rho_ = 1.0;
  MatrixXd U_;
  Eigen::MatrixXcd Y_;  // projected copy of the spectrum
  Eigen::MatrixXcd W_;  // scaled dual
  Eigen::FFT<double> fft_;
  std::vector<double> series_;
  std::vector<std::complex<double>> spectrum_;
};

struct MismatchCost {
  double cost = 0.0;          // average cost on the true system, +inf if unstable
  bool stabilizing = false;   // rho of the true closed loop < 1
  double delta_hinf = 0.0;    // grid norm of [Delta_A Delta_B][Phi_x; Phi_u]
  bool certified = false;     // delta_hinf < 1
};

MismatchCost cost_under_mismatch(const LinearSystem& truth, const FirResponse& resp,
                                 const sysid::ModelEstimate& estimate, const LqrWeights& w,
                                 int grid_size = kDefaultFreqGrid);

struct SuboptimalityCertificate {
  double bound = 0.0;
  double product = 0.0;  // (eps_A + eps_B ||K*||) ||R_{A+BK*}||_inf
  bool applicable = false;
  double k_norm = 0.0;
  double resolvent_norm = 0.0;
};

SuboptimalityCertificate suboptimality_certificate(double eps_A, double eps_B,
                                                   const LinearSystem& truth,
                                                   const LqrWeights& w,
                                                   int grid_size = kDefaultFreqGrid);

nlohmann::json to_json(const SlsSolution& sol);
SlsSolution solution_from_json(const nlohmann::json& j);

}  // namespace regretlab::sls
