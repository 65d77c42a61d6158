#include "regretlab/sls.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "regretlab/error.hpp"
#include "regretlab/json_io.hpp"

namespace regretlab::sls {
namespace {

using Complex = std::complex<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<MatrixXd> scaled_stack(const FirResponse& resp, double sx, double su) {
  std::vector<MatrixXd> taps;
  taps.reserve(resp.horizon());
  for (int k = 0; k < resp.horizon(); ++k) {
    MatrixXd S(resp.nx() + resp.nu(), resp.nx());
    S << sx * resp.taps_x[k], su * resp.taps_u[k];
    taps.push_back(std::move(S));
  }
  return taps;
}

int next_pow2(int v) {
  int p = 16;
  while (p < v) p *= 2;
  return p;
}

}  // namespace

double AchievabilityResidual::max_equality() const {
  double worst = init;
  for (double s : steps) worst = std::max(worst, s);
  return worst;
}

AchievabilityResidual achievability_residual(const FirResponse& resp, const MatrixXd& A_hat,
                                             const MatrixXd& B_hat) {
  resp.validate();
  AchievabilityResidual r;
  const int F = resp.horizon();
  r.init = (resp.taps_x[0] - MatrixXd::Identity(resp.nx(), resp.nx())).norm();
  for (int k = 0; k + 1 < F; ++k) {
    r.steps.push_back(
        (resp.taps_x[k + 1] - A_hat * resp.taps_x[k] - B_hat * resp.taps_u[k]).norm());
  }
  r.terminal = (A_hat * resp.taps_x[F - 1] + B_hat * resp.taps_u[F - 1]).norm();
  return r;
}

double h_alpha(const FirResponse& resp, double eps_A, double eps_B, double alpha,
               int grid_size) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  require(eps_A >= 0.0 && eps_B >= 0.0, "eps_A, eps_B must be >= 0");
  if (eps_A == 0.0 && eps_B == 0.0) return 0.0;
  const auto taps = scaled_stack(resp, eps_A / std::sqrt(alpha), eps_B / std::sqrt(1.0 - alpha));
  return hinf_norm(taps, grid_size);
}

std::vector<double> default_gamma_grid(int points, double top) {
  require(points >= 2, "gamma grid needs at least two points");
  require(top > 0.0 && top < 1.0, "gamma grid top must lie in (0, 1)");
  std::vector<double> grid(points);
  const double last = std::log(1.0 - top);
  for (int i = 0; i < points; ++i) {
    grid[i] = 1.0 - std::exp(last * i / (points - 1));
  }
  grid.front() = 0.0;
  grid.back() = top;
  return grid;
}

void SlsProblem::validate() const {
  require(horizon >= 2, "FIR horizon must be >= 2");
  require(max_horizon >= horizon, "max_horizon must be >= horizon");
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie strictly in (0, 1)");
  require(!gamma_grid.empty(), "gamma grid must be non-empty");
  for (std::size_t i = 0; i < gamma_grid.size(); ++i) {
    require(gamma_grid[i] >= 0.0 && gamma_grid[i] < 1.0, "gamma grid must lie in [0, 1)");
    if (i > 0) require(gamma_grid[i] > gamma_grid[i - 1], "gamma grid must be ascending");
  }
  require(freq_grid >= 16, "frequency grid must have >= 16 points");
  require(eps_V >= 0.0 && fold_factor >= 0.0, "eps_V and fold_factor must be >= 0");
  require(estimate.eps_A >= 0.0 && estimate.eps_B >= 0.0, "eps_A, eps_B must be >= 0");
  LinearSystem{estimate.A_hat, estimate.B_hat, 0.0}.validate();
  weights.validate(static_cast<int>(estimate.A_hat.rows()),
                   static_cast<int>(estimate.B_hat.cols()));
}

std::string_view to_string(SlsStatus status) {
  switch (status) {
    case SlsStatus::kFeasible: return "feasible";
    case SlsStatus::kInfeasible: return "infeasible";
    case SlsStatus::kInnerSolverStall: return "inner_solver_stall";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Inner solver.
//
// Input taps U = [U_1; ...; U_F] (F m x n) are the decision variables. State
// taps follow from the step constraints, X = Gamma U + chi with X_1 = I, and
// the terminal constraint Psi U = -A^F is kept as an equality in every
// solve. The objective and the penalty decouple across the n columns, so one
// factorization serves all of them.

InnerSolver::InnerSolver(const MatrixXd& A_hat, const MatrixXd& B_hat, const LqrWeights& w,
                         int horizon, double scale_x, double scale_u,
                         const InnerSolverOptions& options)
    : A_(A_hat),
      B_(B_hat),
      w_(w),
      F_(horizon),
      n_(static_cast<int>(A_hat.rows())),
      m_(static_cast<int>(B_hat.cols())),
      sx_(scale_x),
      su_(scale_u),
      opt_(options) {
  require(horizon >= 1, "inner solver: horizon must be >= 1");
  require(scale_x >= 0.0 && scale_u >= 0.0, "inner solver: scales must be >= 0");
  grid_ = options.synthesis_grid > 0 ? options.synthesis_grid : next_pow2(4 * F_);
  require(grid_ > F_ && grid_ % 2 == 0, "synthesis grid must be even and exceed the horizon");

  std::vector<MatrixXd> power(F_ + 1);
  power[0] = MatrixXd::Identity(n_, n_);
  for (int k = 1; k <= F_; ++k) power[k] = A_ * power[k - 1];
  std::vector<MatrixXd> power_b(F_);
  for (int k = 0; k < F_; ++k) power_b[k] = power[k] * B_;

  gamma_ = MatrixXd::Zero(F_ * n_, F_ * m_);
  chi_.resize(F_ * n_, n_);
  psi_.resize(n_, F_ * m_);
  for (int k = 0; k < F_; ++k) {
    chi_.block(k * n_, 0, n_, n_) = power[k];
    for (int j = 0; j < k; ++j) gamma_.block(k * n_, j * m_, n_, m_) = power_b[k - 1 - j];
    psi_.block(0, k * m_, n_, m_) = power_b[F_ - 1 - k];
  }
  terminal_ = power[F_];

  MatrixXd q_gamma(F_ * n_, F_ * m_);
  MatrixXd q_chi(F_ * n_, n_);
  for (int k = 0; k < F_; ++k) {
    q_gamma.middleRows(k * n_, n_) = w_.Q * gamma_.middleRows(k * n_, n_);
    q_chi.middleRows(k * n_, n_) = w_.Q * chi_.middleRows(k * n_, n_);
  }
  gqg_ = gamma_.transpose() * q_gamma;
  gg_ = gamma_.transpose() * gamma_;
  gqx_ = gamma_.transpose() * q_chi;
  gx_ = gamma_.transpose() * chi_;

  fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  series_.assign(grid_, 0.0);
  spectrum_.assign(grid_ / 2 + 1, Complex(0.0, 0.0));
}

void InnerSolver::factor(double rho) {
  if (rho == factored_rho_) return;
  const double beta = 0.5 * rho;
  MatrixXd H = gqg_ + beta * sx_ * sx_ * gg_;
  for (int k = 0; k < F_; ++k) {
    H.block(k * m_, k * m_, m_, m_) += w_.R;
  }
  H.diagonal().array() += beta * su_ * su_;
  h_llt_.compute(H);
  if (h_llt_.info() != Eigen::Success) {
    fail(ErrorCode::kNonConvergent, "inner solver: Hessian is not positive definite");
  }
  h_inv_psi_t_ = h_llt_.solve(psi_.transpose());
  schur_.compute(psi_ * h_inv_psi_t_);
  factored_rho_ = rho;
}

MatrixXd InnerSolver::solve_taps(const MatrixXd& Tx, const MatrixXd& Tu, double beta) const {
  MatrixXd rhs = -gqx_;
  if (beta > 0.0) {
    rhs -= beta * sx_ * sx_ * gx_;
    if (sx_ > 0.0) rhs.noalias() += (beta * sx_) * (gamma_.transpose() * Tx);
    if (su_ > 0.0) rhs += (beta * su_) * Tu;
  }
  const MatrixXd y = h_llt_.solve(rhs);
  const MatrixXd lambda = schur_.solve(psi_ * y + terminal_);
  return y - h_inv_psi_t_ * lambda;
}

MatrixXd InnerSolver::states(const MatrixXd& U) const { return gamma_ * U + chi_; }

double InnerSolver::objective(const MatrixXd& U, const MatrixXd& X) const {
  double total = 0.0;
  for (int k = 0; k < F_; ++k) {
    const auto Xk = X.middleRows(k * n_, n_);
    const auto Uk = U.middleRows(k * m_, m_);
    total += (Xk.transpose() * w_.Q * Xk).trace() + (Uk.transpose() * w_.R * Uk).trace();
  }
  return total;
}

FirResponse InnerSolver::unpack(const MatrixXd& U) const {
  FirResponse resp;
  MatrixXd X = MatrixXd::Identity(n_, n_);
  for (int k = 0; k < F_; ++k) {
    resp.taps_x.push_back(X);
    resp.taps_u.push_back(U.middleRows(k * m_, m_));
    X = A_ * X + B_ * resp.taps_u.back();
  }
  return resp;
}

// Spectra are stored flat: column l holds the (n + m) x n response at
// w_l = 2 pi l / grid in column-major order, for l = 0..grid/2.
void InnerSolver::transform(const MatrixXd& U, const MatrixXd& X, Eigen::MatrixXcd& out) {
  const int p = n_ + m_;
  const int half = grid_ / 2 + 1;
  out.resize(p * n_, half);
  std::fill(series_.begin(), series_.end(), 0.0);
  for (int j = 0; j < n_; ++j) {
    for (int i = 0; i < p; ++i) {
      for (int k = 0; k < F_; ++k) {
        series_[k + 1] = i < n_ ? sx_ * X(k * n_ + i, j) : su_ * U(k * m_ + (i - n_), j);
      }
      fft_.fwd(spectrum_.data(), series_.data(), grid_);
      const int row = i + p * j;
      for (int l = 0; l < half; ++l) out(row, l) = spectrum_[l];
    }
  }
}

void InnerSolver::targets(MatrixXd& Tx, MatrixXd& Tu) {
  const int p = n_ + m_;
  const int half = grid_ / 2 + 1;
  Tx.resize(F_ * n_, n_);
  Tu.resize(F_ * m_, n_);
  for (int j = 0; j < n_; ++j) {
    for (int i = 0; i < p; ++i) {
      const int row = i + p * j;
      for (int l = 0; l < half; ++l) spectrum_[l] = Y_(row, l) - W_(row, l);
      spectrum_[0] = spectrum_[0].real();
      spectrum_[half - 1] = spectrum_[half - 1].real();
      fft_.inv(series_.data(), spectrum_.data(), grid_);
      for (int k = 0; k < F_; ++k) {
        if (i < n_) {
          Tx(k * n_ + i, j) = series_[k + 1];
        } else {
          Tu(k * m_ + (i - n_), j) = series_[k + 1];
        }
      }
    }
  }
}

void InnerSolver::project(Eigen::Ref<Eigen::VectorXcd> column, double gamma) const {
  if (column.squaredNorm() <= gamma * gamma) return;
  Eigen::Map<Eigen::MatrixXcd> Z(column.data(), n_ + m_, n_);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Z.adjoint() * Z);
  const auto& lambda = es.eigenvalues();
  if (lambda.maxCoeff() <= gamma * gamma) return;
  Eigen::VectorXd shrink(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double sigma = std::sqrt(std::max(0.0, lambda(i)));
    shrink(i) = sigma > gamma ? gamma / sigma : 1.0;
  }
  const Eigen::MatrixXcd& V = es.eigenvectors();
  const Eigen::MatrixXcd P = V * shrink.cast<Complex>().asDiagonal() * V.adjoint();
  Z = Z * P;
}

InnerSolver::Result InnerSolver::solve_unconstrained() {
  factor(0.0);
  const MatrixXd U = solve_taps(MatrixXd(), MatrixXd(), 0.0);
  Result r;
  r.response = unpack(U);
  r.h2 = std::sqrt(std::max(0.0, objective(U, states(U))));
  r.converged = true;
  return r;
}

double InnerSolver::hinf_lower_bound() const {
  if (sx_ == 0.0 && su_ == 0.0) return 0.0;
  const int p = F_ * m_;
  MatrixXd kkt = MatrixXd::Zero(p + n_, p + n_);
  kkt.topLeftCorner(p, p) = sx_ * sx_ * gg_;
  kkt.topLeftCorner(p, p).diagonal().array() += su_ * su_;
  kkt.topRightCorner(p, n_) = psi_.transpose();
  kkt.bottomLeftCorner(n_, p) = psi_;
  MatrixXd rhs(p + n_, n_);
  rhs.topRows(p) = -sx_ * sx_ * gx_;
  rhs.bottomRows(n_) = -terminal_;
  const MatrixXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  const MatrixXd U = sol.topRows(p);
  const MatrixXd X = states(U);
  double worst = 0.0;
  for (int c = 0; c < n_; ++c) {
    worst = std::max(worst, sx_ * sx_ * X.col(c).squaredNorm() + su_ * su_ * U.col(c).squaredNorm());
  }
  // Guard against round-off in the least-squares solve.
  return std::sqrt(worst) * (1.0 - 1e-9);
}

InnerSolver::Result InnerSolver::solve(double gamma) {
  require(gamma >= 0.0, "inner solver: gamma must be >= 0");
  const int half = grid_ / 2 + 1;
  const double relax = opt_.relaxation;
  Eigen::MatrixXcd spectrum;
  if (!warm_) {
    factor(0.0);
    U_ = solve_taps(MatrixXd(), MatrixXd(), 0.0);
    rho_ = opt_.rho;
    W_.setZero((n_ + m_) * n_, half);
    warm_ = true;
  }
  transform(U_, states(U_), spectrum);
  Y_ = spectrum + W_;
  for (int l = 0; l < half; ++l) project(Y_.col(l), gamma);

  // Parseval weights for the half spectrum.
  auto weight = [&](int l) { return (l == 0 || l == half - 1) ? 1.0 : 2.0; };

  Result r;
  MatrixXd Tx, Tu, U = U_, X = states(U_);
  Eigen::VectorXcd relaxed, next;
  double prev_obj = kInf;
  double best_primal = kInf;
  int last_progress = 0;
  const double tol = opt_.primal_tol * std::max(1.0, gamma);
  for (int it = 1; it <= opt_.max_iter; ++it) {
    factor(rho_);
    targets(Tx, Tu);
    U = solve_taps(Tx, Tu, 0.5 * rho_);
    X = states(U);
    transform(U, X, spectrum);

    double primal_max = 0.0, primal_sq = 0.0, dual_sq = 0.0;
    for (int l = 0; l < half; ++l) {
      relaxed = relax * spectrum.col(l) + (1.0 - relax) * Y_.col(l);
      next = relaxed + W_.col(l);
      project(next, gamma);
      W_.col(l) += relaxed - next;
      const double g2 = (spectrum.col(l) - next).squaredNorm();
      primal_max = std::max(primal_max, g2);
      primal_sq += weight(l) * g2;
      dual_sq += weight(l) * (next - Y_.col(l)).squaredNorm();
      Y_.col(l) = next;
    }
    primal_max = std::sqrt(primal_max);
    const double primal_rms = std::sqrt(primal_sq / grid_);
    const double dual_rms = rho_ * std::sqrt(dual_sq / grid_);

    const double obj = objective(U, X);
    const bool settled = std::abs(obj - prev_obj) <= opt_.objective_rtol * std::max(obj, 1e-300);
    prev_obj = obj;
    r.iterations = it;
    r.primal_residual = primal_max;
    if (primal_max <= tol && settled) {
      r.converged = true;
      break;
    }
    if (primal_max < 0.99 * best_primal) {
      best_primal = primal_max;
      last_progress = it;
    } else if (it - last_progress > opt_.stall_window) {
      break;
    }
    if (it % 10 == 0) {
      if (primal_rms > 10.0 * dual_rms) {
        rho_ *= 2.0;
        W_ *= 0.5;
      } else if (dual_rms > 10.0 * primal_rms) {
        rho_ *= 0.5;
        W_ *= 2.0;
      }
    }
  }
  U_ = U;
  r.response = unpack(U_);
  r.h2 = std::sqrt(std::max(0.0, objective(U_, X)));
  return r;
}

// ---------------------------------------------------------------------------
// Outer gamma search.

namespace {

struct Candidate {
  InnerSolver::Result result;
  double target = 0.0;     // gamma handed to the inner solver (inf: unconstrained)
  double certified = kInf; // measured H_alpha + folded terminal residual
  double terminal = 0.0;
  double value = kInf;     // h2 / (1 - certified)
};

}  // namespace

SlsSolution robust_synthesize(const SlsProblem& prob) {
  prob.validate();
  const auto& est = prob.estimate;
  const double sx = est.eps_A / std::sqrt(prob.alpha);
  const double su = est.eps_B / std::sqrt(1.0 - prob.alpha);
  const double slack = prob.eps_V * prob.fold_factor;

  SlsSolution out;
  int F = prob.horizon;
  for (;;) {
    InnerSolver solver(est.A_hat, est.B_hat, prob.weights, F, sx, su, prob.inner);
    int solves = 0, stalls = 0;
    auto certify = [&](InnerSolver::Result r, double target) {
      Candidate c;
      c.target = target;
      c.terminal = achievability_residual(r.response, est.A_hat, est.B_hat).terminal;
      c.certified = h_alpha(r.response, est.eps_A, est.eps_B, prob.alpha, prob.freq_grid) +
                    prob.fold_factor * c.terminal;
      if (c.certified < 1.0 && std::isfinite(r.h2)) c.value = r.h2 / (1.0 - c.certified);
      c.result = std::move(r);
      return c;
    };

    std::optional<Candidate> best;
    auto consider = [&](Candidate c) {
      const bool better = std::isfinite(c.value) && (!best || c.value < best->value);
      if (better) best = std::move(c);
      return better;
    };

    Candidate free = certify(solver.solve_unconstrained(), kInf);
    ++solves;
    const double gamma0 = free.certified;
    double lower = 0.0;
    if (sx > 0.0 || su > 0.0) lower = solver.hinf_lower_bound();
    out.gamma_lower_bound = lower;
    if (std::isfinite(free.value)) best = free;

    if ((sx > 0.0 || su > 0.0) && lower + slack < 1.0) {
      // Grid points strictly between the lower bound and the unconstrained
      // norm. The value is quasi-convex in gamma, so a golden-section search
      // over grid indices finds the same minimizer as visiting every point.
      std::vector<double> targets;
      for (double g : prob.gamma_grid) {
        const double eff = g - slack;
        if (eff > lower && eff < gamma0) targets.push_back(eff);
      }
      std::vector<double> values(targets.size(), std::numeric_limits<double>::quiet_NaN());
      auto run = [&](double t) {
        auto r = solver.solve(t);
        ++solves;
        if (!r.converged) ++stalls;
        Candidate c = certify(std::move(r), t);
        const double v = c.value;
        consider(std::move(c));
        return v;
      };
      auto value_at = [&](int i) {
        if (std::isnan(values[i])) values[i] = run(targets[i]);
        return values[i];
      };
      // Infeasible targets sit at the low end, so ties between two infinite
      // values move the bracket up.
      auto left_wins = [&](int i, int j) {
        const double vi = value_at(j), vj = value_at(i);
        if (!std::isfinite(vi) && !std::isfinite(vj)) return false;
        return vj <= vi;
      };
      int lo = 0;
      int hi = static_cast<int>(targets.size()) - 1;
      while (hi - lo > 2) {
        const int span = hi - lo;
        const int m1 = lo + static_cast<int>(std::lround(0.382 * span));
        const int m2 = std::max(m1 + 1, lo + static_cast<int>(std::lround(0.618 * span)));
        if (left_wins(m1, m2)) {
          hi = m2;
        } else {
          lo = m1;
        }
      }
      for (int i = hi; i >= lo; --i) value_at(i);

      if (prob.densify && best) {
        const double center = best->target == kInf ? gamma0 : best->target;
        double up = gamma0;
        double down = lower;
        for (std::size_t i = 0; i < targets.size(); ++i) {
          if (std::isnan(values[i])) continue;
          if (targets[i] > center) up = std::min(up, targets[i]);
          if (targets[i] < center) down = std::max(down, targets[i]);
        }
        for (double t : {0.5 * (center + up), 0.5 * (center + down)}) {
          if (t > lower && t < gamma0 && std::abs(t - center) > 1e-6) run(t);
        }
      }
    }

    out.inner_solves += solves;
    out.stalled_solves += stalls;
    const bool retry = best && best->terminal > prob.eps_V && 2 * F <= prob.max_horizon;
    if (retry) {
      F *= 2;
      continue;
    }
    if (best) {
      out.response = best->result.response;
      out.controller = realize_controller(out.response);
      out.nominal_h2 = h2_norm(out.response, prob.weights);
      out.gamma_used = best->certified;
      out.worst_case_bound = out.nominal_h2 / (1.0 - out.gamma_used);
      out.feasible = true;
      out.status = SlsStatus::kFeasible;
    } else {
      out.feasible = false;
      out.status = (stalls > 0 && lower + slack < 1.0) ? SlsStatus::kInnerSolverStall
                                                        : SlsStatus::kInfeasible;
      out.message = lower + slack >= 1.0
                        ? "uncertainty too large: H_alpha lower bound " + std::to_string(lower) +
                              " >= 1"
                        : "no gamma on the grid admits a certified response";
    }
    return out;
  }
}

// ---------------------------------------------------------------------------
// Realization and evaluation.

SlsController realize_controller(const FirResponse& resp) {
  resp.validate();
  const int F = resp.horizon();
  const int n = resp.nx();
  const int m = resp.nu();
  const int order = (F - 1) * n;
  SlsController K;
  K.Dk = resp.taps_u[0];
  K.Ak = MatrixXd::Zero(order, order);
  K.Bk = MatrixXd::Zero(order, n);
  K.Ck = MatrixXd::Zero(m, order);
  if (order == 0) return K;
  K.Bk.topRows(n).setIdentity();
  for (int i = 1; i < F; ++i) {
    K.Ak.block(0, (i - 1) * n, n, n) = -resp.taps_x[i];
    K.Ck.block(0, (i - 1) * n, m, n) = resp.taps_u[i] - resp.taps_u[0] * resp.taps_x[i];
    if (i + 1 < F) K.Ak.block(i * n, (i - 1) * n, n, n).setIdentity();
  }
  return K;
}

MatrixXd closed_loop_matrix(const LinearSystem& sys, const SlsController& K) {
  const int n = sys.nx();
  const int order = K.order();
  MatrixXd M(n + order, n + order);
  M.topLeftCorner(n, n) = sys.A + sys.B * K.Dk;
  if (order > 0) {
    M.topRightCorner(n, order) = sys.B * K.Ck;
    M.bottomLeftCorner(order, n) = K.Bk;
    M.bottomRightCorner(order, order) = K.Ak;
  }
  return M;
}

FirControllerState::FirControllerState(FirResponse resp) : resp_(std::move(resp)) {
  resp_.validate();
  reset();
}

void FirControllerState::reset() {
  delta_.assign(resp_.horizon(), VectorXd::Zero(resp_.nx()));
  head_ = 0;
}

VectorXd FirControllerState::step(const VectorXd& x) {
  const int F = resp_.horizon();
  // delta_[(head_ + k - 1) % F] holds delta_{t-k} for k = 1..F-1.
  VectorXd delta = x;
  for (int k = 1; k < F; ++k) delta.noalias() -= resp_.taps_x[k] * delta_[(head_ + k - 1) % F];
  VectorXd u = resp_.taps_u[0] * delta;
  for (int k = 1; k < F; ++k) u.noalias() += resp_.taps_u[k] * delta_[(head_ + k - 1) % F];
  head_ = (head_ + F - 1) % F;
  delta_[head_] = std::move(delta);
  return u;
}

MismatchCost cost_under_mismatch(const LinearSystem& truth, const FirResponse& resp,
                                 const sysid::ModelEstimate& estimate, const LqrWeights& w,
                                 int grid_size) {
  truth.validate();
  resp.validate();
  MismatchCost out;
  std::vector<MatrixXd> delta;
  const MatrixXd dA = estimate.A_hat - truth.A;
  const MatrixXd dB = estimate.B_hat - truth.B;
  for (int k = 0; k < resp.horizon(); ++k) {
    delta.push_back(dA * resp.taps_x[k] + dB * resp.taps_u[k]);
  }
  out.delta_hinf = hinf_norm(delta, grid_size);
  out.certified = out.delta_hinf < 1.0;

  const SlsController K = realize_controller(resp);
  const MatrixXd M = closed_loop_matrix(truth, K);
  out.stabilizing = spectral_radius(M) < 1.0;
  if (!out.stabilizing) {
    out.cost = kInf;
    return out;
  }
  const int n = truth.nx();
  const int order = K.order();
  MatrixXd G(truth.nu(), n + order);
  G.leftCols(n) = K.Dk;
  if (order > 0) G.rightCols(order) = K.Ck;
  MatrixXd W = G.transpose() * w.R * G;
  W.topLeftCorner(n, n) += w.Q;
  MatrixXd E = MatrixXd::Zero(n + order, n);
  E.topRows(n).setIdentity();
  out.cost = closed_loop_average_cost(M, E, W, truth.sigma_w);
  return out;
}

SuboptimalityCertificate suboptimality_certificate(double eps_A, double eps_B,
                                                   const LinearSystem& truth,
                                                   const LqrWeights& w, int grid_size) {
  require(eps_A >= 0.0 && eps_B >= 0.0, "eps_A, eps_B must be >= 0");
  const DareSolution dare = solve_dare(truth, w);
  SuboptimalityCertificate c;
  c.k_norm = spectral_norm(dare.K.K);
  c.resolvent_norm = resolvent_hinf_norm(truth.A + truth.B * dare.K.K, grid_size);
  c.product = (eps_A + eps_B * c.k_norm) * c.resolvent_norm;
  c.bound = 5.0 * c.product;
  c.applicable = c.product <= 0.2;
  return c;
}

nlohmann::json to_json(const SlsSolution& sol) {
  nlohmann::json j;
  j["status"] = std::string(to_string(sol.status));
  j["feasible"] = sol.feasible;
  j["gamma_used"] = sol.gamma_used;
  j["nominal_h2"] = sol.nominal_h2;
  j["worst_case_bound"] = sol.worst_case_bound;
  j["gamma_lower_bound"] = sol.gamma_lower_bound;
  j["inner_solves"] = sol.inner_solves;
  j["stalled_solves"] = sol.stalled_solves;
  if (!sol.message.empty()) j["message"] = sol.message;
  if (sol.feasible) j["response"] = fir_to_json(sol.response);
  return j;
}

SlsSolution solution_from_json(const nlohmann::json& j) {
  SlsSolution sol;
  const auto status = j.at("status").get<std::string>();
  if (status == "feasible") {
    sol.status = SlsStatus::kFeasible;
  } else if (status == "infeasible") {
    sol.status = SlsStatus::kInfeasible;
  } else if (status == "inner_solver_stall") {
    sol.status = SlsStatus::kInnerSolverStall;
  } else {
    fail(ErrorCode::kConfig, "unknown synthesis status '" + status + "'");
  }
  sol.feasible = j.at("feasible").get<bool>();
  sol.gamma_used = j.at("gamma_used").get<double>();
  sol.nominal_h2 = j.at("nominal_h2").get<double>();
  sol.worst_case_bound = j.at("worst_case_bound").get<double>();
  sol.gamma_lower_bound = j.value("gamma_lower_bound", 0.0);
  sol.inner_solves = j.value("inner_solves", 0);
  sol.stalled_solves = j.value("stalled_solves", 0);
  sol.message = j.value("message", std::string());
  if (j.contains("response")) {
    sol.response = fir_from_json(j.at("response"));
    sol.controller = realize_controller(sol.response);
  }
  return sol;
}

}  // namespace regretlab::sls
