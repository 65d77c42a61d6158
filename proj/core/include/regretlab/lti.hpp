#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace regretlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kDefaultFreqGrid = 4096;

// x_{t+1} = A x_t + B u_t + w_t with w_t ~ N(0, sigma_w^2 I).
struct LinearSystem {
  MatrixXd A;
  MatrixXd B;
  double sigma_w = 1.0;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
  // Throws InvalidArgument on inconsistent dimensions or negative noise.
  void validate() const;
};

// Stage cost x'Qx + u'Ru. The model-free code calls the state weight S.
struct LqrWeights {
  MatrixXd Q;
  MatrixXd R;

  void validate(int nx, int nu, double tol = 1e-10) const;
};

// u_t = K x_t.
struct StaticGain {
  MatrixXd K;
};

// Strictly proper FIR system responses: taps_x[k-1] and taps_u[k-1] are the
// coefficients of z^{-k}, k = 1..F.
struct FirResponse {
  std::vector<MatrixXd> taps_x;
  std::vector<MatrixXd> taps_u;

  int horizon() const { return static_cast<int>(taps_x.size()); }
  int nx() const { return taps_x.empty() ? 0 : static_cast<int>(taps_x[0].rows()); }
  int nu() const { return taps_u.empty() ? 0 : static_cast<int>(taps_u[0].rows()); }
  void validate() const;
};

struct Trajectory {
  std::vector<VectorXd> states;  // x_0 .. x_T
  std::vector<VectorXd> inputs;  // u_0 .. u_{T-1}
  std::vector<double> costs;     // x_t'Qx_t + u_t'Ru_t
  bool overflow = false;         // truncated because a state blew up

  int length() const { return static_cast<int>(inputs.size()); }
};

struct DareSolution {
  MatrixXd P;
  StaticGain K;
  int iterations = 0;
};

// Fixed-point iteration of the Riccati recursion seeded at P = Q. Stops when
// the spectral norm of successive differences is <= tol. Throws NonConvergent
// when max_iter is exceeded or the resulting closed loop is not stable.
DareSolution solve_dare(const LinearSystem& sys, const LqrWeights& w,
                        double tol = 1e-10, int max_iter = 1'000'000);

// Solves V = M'VM + W by squared Smith (doubling) iteration. Throws Unstable
// if rho(M) >= 1. The residual is driven below tol * max(1, ||V||).
MatrixXd solve_dlyap(const MatrixXd& M, const MatrixXd& W, double tol = 1e-13,
                     int max_iter = 100);

// Infinite-horizon average cost sigma_w^2 tr(P_K), P_K = dlyap(A+BK, Q+K'RK).
// Returns +infinity when A+BK is not stable.
double lqr_cost(const LinearSystem& sys, const LqrWeights& w, const StaticGain& K);

bool is_stabilizing(const LinearSystem& sys, const StaticGain& K);

// Average cost of the stable closed loop z+ = M z + E w, cost z'Wz, with
// w ~ N(0, sigma^2 I). Propagates the noise columns until their contribution
// is negligible. Returns +infinity if rho(M) >= 1.
double closed_loop_average_cost(const MatrixXd& M, const MatrixXd& E,
                                const MatrixXd& W, double sigma);

// sqrt(sum_k ||blkdiag(Q^1/2, R^1/2) [Phi_x[k]; Phi_u[k]]||_F^2).
double h2_norm(const FirResponse& resp, const LqrWeights& w);

// Max over a uniform grid of [0, 2pi) of sigma_max(sum_k taps[k-1] e^{-jwk}).
// A grid lower bound on the true H-infinity norm.
double hinf_norm(std::span<const MatrixXd> taps, int grid_size = kDefaultFreqGrid);
// Same for the stacked response [Phi_x; Phi_u].
double hinf_norm(const FirResponse& resp, int grid_size = kDefaultFreqGrid);
// sup_w sigma_max((e^{jw} I - M)^{-1}) on a uniform grid.
double resolvent_hinf_norm(const MatrixXd& M, int grid_size = kDefaultFreqGrid);

double spectral_radius(const MatrixXd& M);
// Largest singular value by power iteration on M'M (relative tol 1e-9).
double spectral_norm(const MatrixXd& M);

// Taps of (zI - A - BK)^{-1} and K (zI - A - BK)^{-1} truncated at F.
FirResponse fir_from_static_gain(const MatrixXd& A, const MatrixXd& B,
                                 const MatrixXd& K, int horizon);

using Policy = std::function<VectorXd(const VectorXd&)>;

struct SimulationOptions {
  VectorXd x0;                 // empty means zero
  double blowup_bound = 1e8;   // any |x_i| above this flags overflow
};

// Rolls the system forward T steps under `policy`; w_t drawn from Rng(seed).
Trajectory simulate(const LinearSystem& sys, const Policy& policy,
                    const LqrWeights& w, int T, std::uint64_t seed,
                    const SimulationOptions& options = {});

Policy linear_policy(const StaticGain& K);

}  // namespace regretlab
