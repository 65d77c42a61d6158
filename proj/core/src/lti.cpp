#include "regretlab/lti.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "regretlab/error.hpp"
#include "regretlab/rng.hpp"

namespace regretlab {
namespace {

using Complex = std::complex<double>;

double symmetric_norm(const MatrixXd& S) {
  if (S.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_symmetric(const MatrixXd& M, double tol) {
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, M.cwiseAbs().maxCoeff());
}

// Largest eigenvalue of the Hermitian matrix Y^* Y, i.e. sigma_max(Y)^2.
double sigma_max_squared(const Eigen::MatrixXcd& Y) {
  if (Y.cols() == 1) return Y.col(0).squaredNorm();
  const Eigen::MatrixXcd G = Y.adjoint() * Y;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

}  // namespace

void LinearSystem::validate() const {
  require(A.rows() >= 1 && A.rows() == A.cols(), "A must be square with n_x >= 1");
  require(B.rows() == A.rows() && B.cols() >= 1, "B must be n_x x n_u with n_u >= 1");
  require(sigma_w >= 0.0 && std::isfinite(sigma_w), "sigma_w must be >= 0");
}

void LqrWeights::validate(int nx, int nu, double tol) const {
  require(Q.rows() == nx && Q.cols() == nx, "Q must be n_x x n_x");
  require(R.rows() == nu && R.cols() == nu, "R must be n_u x n_u");
  require(is_symmetric(Q, tol), "Q must be symmetric");
  require(is_symmetric(R, tol), "R must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(Q, Eigen::EigenvaluesOnly);
  require(eq.eigenvalues().minCoeff() >= -tol, "Q must be positive semidefinite");
  Eigen::SelfAdjointEigenSolver<MatrixXd> er(R, Eigen::EigenvaluesOnly);
  require(er.eigenvalues().minCoeff() > tol, "R must be positive definite");
}

void FirResponse::validate() const {
  require(!taps_x.empty(), "FIR horizon must be >= 1");
  require(taps_x.size() == taps_u.size(), "taps_x and taps_u must have equal length");
  const auto nx = taps_x[0].rows();
  const auto nu = taps_u[0].rows();
  for (std::size_t k = 0; k < taps_x.size(); ++k) {
    require(taps_x[k].rows() == nx && taps_x[k].cols() == nx, "non-uniform Phi_x tap");
    require(taps_u[k].rows() == nu && taps_u[k].cols() == nx, "non-uniform Phi_u tap");
  }
}

DareSolution solve_dare(const LinearSystem& sys, const LqrWeights& w, double tol,
                        int max_iter) {
  sys.validate();
  w.validate(sys.nx(), sys.nu());
  const MatrixXd& A = sys.A;
  const MatrixXd& B = sys.B;
  const MatrixXd At = A.transpose();
  const MatrixXd Bt = B.transpose();

  MatrixXd P = w.Q;
  MatrixXd K = MatrixXd::Zero(sys.nu(), sys.nx());
  for (int it = 1; it <= max_iter; ++it) {
    const MatrixXd S = Bt * P * B + w.R;
    K = -S.ldlt().solve(Bt * P * A);
    MatrixXd next = w.Q + At * P * A + At * P * B * K;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) break;
    const double delta = symmetric_norm(next - P);
    P = std::move(next);
    if (delta <= tol * std::max(1.0, symmetric_norm(P))) {
      K = -(Bt * P * B + w.R).ldlt().solve(Bt * P * A);
      if (spectral_radius(A + B * K) >= 1.0) {
        fail(ErrorCode::kNonConvergent,
             "Riccati fixed point does not stabilize (A, B); system may not be stabilizable");
      }
      return {P, StaticGain{K}, it};
    }
  }
  fail(ErrorCode::kNonConvergent, "Riccati recursion did not converge in " +
                                      std::to_string(max_iter) + " iterations");
}

MatrixXd solve_dlyap(const MatrixXd& M, const MatrixXd& W, double tol, int max_iter) {
  require(M.rows() == M.cols(), "dlyap: M must be square");
  require(W.rows() == M.rows() && W.cols() == M.cols(), "dlyap: W must match M");
  if (spectral_radius(M) >= 1.0) {
    fail(ErrorCode::kUnstable, "dlyap requires rho(M) < 1");
  }
  MatrixXd V = W;
  MatrixXd Mk = M;
  for (int it = 0; it < max_iter; ++it) {
    V += Mk.transpose() * V * Mk;
    V = 0.5 * (V + V.transpose());
    Mk = Mk * Mk;
    const MatrixXd residual = V - M.transpose() * V * M - W;
    if (residual.norm() <= tol * std::max(1.0, V.norm())) return V;
    if (!V.allFinite()) break;
  }
  fail(ErrorCode::kNonConvergent, "dlyap doubling iteration did not converge");
}

bool is_stabilizing(const LinearSystem& sys, const StaticGain& K) {
  return spectral_radius(sys.A + sys.B * K.K) < 1.0;
}

double lqr_cost(const LinearSystem& sys, const LqrWeights& w, const StaticGain& K) {
  const MatrixXd closed = sys.A + sys.B * K.K;
  if (spectral_radius(closed) >= 1.0) return std::numeric_limits<double>::infinity();
  const MatrixXd P = solve_dlyap(closed, w.Q + K.K.transpose() * w.R * K.K);
  return sys.sigma_w * sys.sigma_w * P.trace();
}

double closed_loop_average_cost(const MatrixXd& M, const MatrixXd& E, const MatrixXd& W,
                                double sigma) {
  if (spectral_radius(M) >= 1.0) return std::numeric_limits<double>::infinity();
  const double w_norm = symmetric_norm(0.5 * (W + W.transpose()));
  MatrixXd Z = E;
  double total = 0.0;
  int quiet = 0;
  for (long k = 0; k < 10'000'000; ++k) {
    const double energy = Z.squaredNorm();
    total += (Z.transpose() * W * Z).trace();
    if (energy * w_norm <= 1e-15 * total || energy == 0.0) {
      if (++quiet >= 10) break;
    } else {
      quiet = 0;
    }
    Z = M * Z;
  }
  return sigma * sigma * total;
}

double h2_norm(const FirResponse& resp, const LqrWeights& w) {
  resp.validate();
  double sum = 0.0;
  for (int k = 0; k < resp.horizon(); ++k) {
    const MatrixXd& X = resp.taps_x[k];
    const MatrixXd& U = resp.taps_u[k];
    sum += (X.transpose() * w.Q * X).trace() + (U.transpose() * w.R * U).trace();
  }
  return std::sqrt(std::max(0.0, sum));
}

double hinf_norm(std::span<const MatrixXd> taps, int grid_size) {
  require(grid_size >= 16, "hinf_norm: grid_size must be >= 16");
  require(!taps.empty(), "hinf_norm: empty FIR");
  const auto rows = taps[0].rows();
  const auto cols = taps[0].cols();
  const int F = static_cast<int>(taps.size());
  const int half = grid_size / 2 + 1;  // real taps: sigma(w) == sigma(-w)

  // freq[l] holds the response at w_l = 2 pi l / grid_size.
  std::vector<Eigen::MatrixXcd> freq(half, Eigen::MatrixXcd::Zero(rows, cols));
  if (grid_size > F) {
    Eigen::FFT<double> fft;
    std::vector<double> series(grid_size, 0.0);
    std::vector<Complex> spectrum;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::fill(series.begin(), series.end(), 0.0);
        for (int k = 0; k < F; ++k) series[k + 1] = taps[k](i, j);
        fft.fwd(spectrum, series);
        for (int l = 0; l < half; ++l) freq[l](i, j) = spectrum[l];
      }
    }
  } else {
    for (int l = 0; l < half; ++l) {
      const double omega = 2.0 * M_PI * l / grid_size;
      for (int k = 0; k < F; ++k) {
        freq[l] += taps[k].cast<Complex>() * std::polar(1.0, -omega * (k + 1));
      }
    }
  }
  double best = 0.0;
  for (const auto& Y : freq) best = std::max(best, sigma_max_squared(Y));
  return std::sqrt(best);
}

double hinf_norm(const FirResponse& resp, int grid_size) {
  resp.validate();
  std::vector<MatrixXd> stacked;
  stacked.reserve(resp.horizon());
  for (int k = 0; k < resp.horizon(); ++k) {
    MatrixXd S(resp.nx() + resp.nu(), resp.nx());
    S << resp.taps_x[k], resp.taps_u[k];
    stacked.push_back(std::move(S));
  }
  return hinf_norm(stacked, grid_size);
}

double resolvent_hinf_norm(const MatrixXd& M, int grid_size) {
  require(M.rows() == M.cols(), "resolvent: M must be square");
  require(grid_size >= 16, "resolvent: grid_size must be >= 16");
  double worst = 0.0;
  for (int l = 0; l <= grid_size / 2; ++l) {
    const double omega = 2.0 * M_PI * l / grid_size;
    Eigen::MatrixXcd Z = -M.cast<Complex>();
    Z.diagonal().array() += std::polar(1.0, omega);
    const Eigen::MatrixXcd G = Z.adjoint() * Z;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G, Eigen::EigenvaluesOnly);
    const double smin2 = es.eigenvalues().minCoeff();
    if (smin2 <= 0.0) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, 1.0 / std::sqrt(smin2));
  }
  return worst;
}

double spectral_radius(const MatrixXd& M) {
  require(M.rows() == M.cols(), "spectral_radius: M must be square");
  if (M.size() == 0) return 0.0;
  if (M.rows() == 1) return std::abs(M(0, 0));
  if (!M.allFinite()) return std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_norm(const MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  const MatrixXd G = M.transpose() * M;
  const auto n = G.rows();
  auto power = [&](VectorXd v) {
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
      VectorXd next = G * v;
      const double norm = next.norm();
      if (norm == 0.0) return 0.0;
      const double rayleigh = v.dot(next);
      v = next / norm;
      if (std::abs(rayleigh - lambda) <= 1e-13 * std::abs(rayleigh)) return rayleigh;
      lambda = rayleigh;
    }
    // Slow separation between the two top singular values: fall back to an
    // exact symmetric eigen-solve.
    return symmetric_norm(G);
  };
  VectorXd start1 = VectorXd::Ones(n);
  VectorXd start2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    start1(i) += 0.1 * static_cast<double>(i);
    start2(i) = (i % 2 == 0 ? 1.0 : -0.7) / static_cast<double>(i + 1);
  }
  return std::sqrt(std::max({0.0, power(start1), power(start2)}));
}

FirResponse fir_from_static_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& K,
                                 int horizon) {
  require(horizon >= 1, "FIR horizon must be >= 1");
  const MatrixXd closed = A + B * K;
  FirResponse resp;
  MatrixXd power = MatrixXd::Identity(A.rows(), A.cols());
  for (int k = 0; k < horizon; ++k) {
    resp.taps_x.push_back(power);
    resp.taps_u.push_back(K * power);
    power = closed * power;
  }
  return resp;
}

Trajectory simulate(const LinearSystem& sys, const Policy& policy, const LqrWeights& w,
                    int T, std::uint64_t seed, const SimulationOptions& options) {
  sys.validate();
  require(T >= 1, "simulate: T must be >= 1");
  Rng rng(seed);
  Trajectory traj;
  traj.states.reserve(T + 1);
  traj.inputs.reserve(T);
  traj.costs.reserve(T);
  VectorXd x = options.x0.size() == 0 ? VectorXd::Zero(sys.nx()) : options.x0;
  require(x.size() == sys.nx(), "simulate: x0 has the wrong dimension");
  traj.states.push_back(x);
  for (int t = 0; t < T; ++t) {
    const VectorXd u = policy(x);
    traj.costs.push_back(x.dot(w.Q * x) + u.dot(w.R * u));
    traj.inputs.push_back(u);
    x = sys.A * x + sys.B * u + rng.normal_vector(sys.nx(), sys.sigma_w);
    traj.states.push_back(x);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > options.blowup_bound) {
      traj.overflow = true;
      break;
    }
  }
  return traj;
}

Policy linear_policy(const StaticGain& K) {
  return [G = K.K](const VectorXd& x) -> VectorXd { return G * x; };
}

}  // namespace regretlab
