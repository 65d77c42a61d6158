#include "regretlab/model_free.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "regretlab/csv.hpp"
#include "regretlab/error.hpp"
#include "regretlab/rng.hpp"
#include "regretlab/sysid.hpp"

namespace regretlab::model_free {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t iteration_seed(std::uint64_t seed, long k) {
  return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(k + 1));
}

}  // namespace

int feature_count(int dim) { return dim * (dim + 1) / 2; }

VectorXd quadratic_features(const VectorXd& z) {
  const int d = static_cast<int>(z.size());
  VectorXd phi(feature_count(d));
  int k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) phi(k++) = z(i) * z(j);
  }
  return phi;
}

QuadraticQ QuadraticQ::from_weights(const VectorXd& w, int nx, int nu, double lambda) {
  const int d = nx + nu;
  require(w.size() == feature_count(d), "weight vector has the wrong length");
  QuadraticQ q;
  q.w = w;
  q.lambda = lambda;
  q.H.resize(d, d);
  int k = 0;
  for (int i = 0; i < d; ++i) {
    q.H(i, i) = w(k++);
    for (int j = i + 1; j < d; ++j) q.H(i, j) = q.H(j, i) = 0.5 * w(k++);
  }
  return q;
}

QuadraticQ QuadraticQ::from_matrix(const MatrixXd& H, double lambda) {
  require(H.rows() == H.cols(), "H must be square");
  const int d = static_cast<int>(H.rows());
  QuadraticQ q;
  q.H = 0.5 * (H + H.transpose());
  q.lambda = lambda;
  q.w.resize(feature_count(d));
  int k = 0;
  for (int i = 0; i < d; ++i) {
    q.w(k++) = q.H(i, i);
    for (int j = i + 1; j < d; ++j) q.w(k++) = 2.0 * q.H(i, j);
  }
  return q;
}

double QuadraticQ::operator()(const VectorXd& x, const VectorXd& u) const {
  VectorXd z(x.size() + u.size());
  z << x, u;
  return z.dot(H * z);
}

std::optional<MatrixXd> QuadraticQ::greedy_gain(int nx) const {
  const int nu = static_cast<int>(H.rows()) - nx;
  require(nu >= 1, "H is smaller than the state dimension");
  const MatrixXd Huu = H.bottomRightCorner(nu, nu);
  Eigen::LLT<MatrixXd> llt(Huu);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return MatrixXd(-llt.solve(H.bottomLeftCorner(nu, nx)));
}

MatrixXd analytic_q_matrix(const LinearSystem& sys, const LqrWeights& w, const MatrixXd& K) {
  const MatrixXd V = solve_dlyap(sys.A + sys.B * K, w.Q + K.transpose() * w.R * K);
  const int nx = sys.nx();
  const int nu = sys.nu();
  MatrixXd H(nx + nu, nx + nu);
  H.topLeftCorner(nx, nx) = w.Q + sys.A.transpose() * V * sys.A;
  H.topRightCorner(nx, nu) = sys.A.transpose() * V * sys.B;
  H.bottomLeftCorner(nu, nx) = sys.B.transpose() * V * sys.A;
  H.bottomRightCorner(nu, nu) = w.R + sys.B.transpose() * V * sys.B;
  return H;
}

namespace {

QuadraticQ lstdq_impl(const Trajectory& data, const MatrixXd& K, std::optional<double> lambda_hat,
                      double rank_tol) {
  const int T = data.length();
  require(T >= 1, "lstdq needs at least one transition");
  require(static_cast<int>(data.states.size()) == T + 1 &&
              static_cast<int>(data.costs.size()) == T,
          "trajectory is inconsistent");
  const int nx = static_cast<int>(data.states[0].size());
  const int nu = static_cast<int>(data.inputs[0].size());
  require(K.rows() == nu && K.cols() == nx, "policy gain has the wrong shape");
  const int p = feature_count(nx + nu);
  const int q = lambda_hat ? p : p + 1;
  MatrixXd M = MatrixXd::Zero(q, q);
  VectorXd b = VectorXd::Zero(q);
  VectorXd z(nx + nu);
  VectorXd z_next(nx + nu);
  VectorXd inst(q);
  VectorXd reg(q);
  for (int t = 0; t < T; ++t) {
    z << data.states[t], data.inputs[t];
    z_next << data.states[t + 1], K * data.states[t + 1];
    inst.head(p) = quadratic_features(z);
    reg.head(p) = inst.head(p) - quadratic_features(z_next);
    if (!lambda_hat) inst(p) = reg(p) = 1.0;
    M.noalias() += inst * reg.transpose();
    b.noalias() += inst * (data.costs[t] - lambda_hat.value_or(0.0));
  }
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod;
  cod.setThreshold(rank_tol);
  cod.compute(M);
  if (cod.rank() < q) {
    fail(ErrorCode::kDegenerateFeatures,
         "LSTD-Q system has rank " + std::to_string(cod.rank()) + " < " + std::to_string(q));
  }
  const VectorXd sol = cod.solve(b);
  return QuadraticQ::from_weights(sol.head(p), nx, nu,
                                  lambda_hat ? *lambda_hat : sol(p));
}

}  // namespace

QuadraticQ lstdq(const Trajectory& data, const MatrixXd& K, double lambda_hat, double rank_tol) {
  return lstdq_impl(data, K, lambda_hat, rank_tol);
}

QuadraticQ lstdq_joint(const Trajectory& data, const MatrixXd& K, double rank_tol) {
  return lstdq_impl(data, K, std::nullopt, rank_tol);
}

LspiResult lspi(const LinearSystem& sys, const LqrWeights& w, const MatrixXd& K0,
                const LspiOptions& options, std::uint64_t seed) {
  require(options.iters >= 0 && options.steps_per_iter >= 1, "invalid LSPI options");
  require(is_stabilizing(sys, {K0}), "LSPI needs a stabilizing initial gain");
  LspiResult out;
  out.K = K0;
  const int nx = sys.nx();
  const int nu = sys.nu();
  for (int it = 0; it < options.iters; ++it) {
    Rng explore(iteration_seed(seed, it), 2);
    const MatrixXd K = out.K;
    const Policy behavior = [&](const VectorXd& x) -> VectorXd {
      return K * x + explore.normal_vector(nu, options.sigma_u);
    };
    SimulationOptions sim;
    sim.blowup_bound = options.blowup_bound;
    const Trajectory data =
        simulate(sys, behavior, w, static_cast<int>(options.steps_per_iter),
                 iteration_seed(seed, it), sim);
    out.samples_used += data.length();
    std::optional<MatrixXd> next;
    if (!data.overflow) {
      double lambda_hat = 0.0;
      for (double c : data.costs) lambda_hat += c;
      lambda_hat /= data.length();
      try {
        const QuadraticQ q =
            options.joint_lambda ? lstdq_joint(data, K) : lstdq(data, K, lambda_hat);
        next = q.greedy_gain(nx);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDegenerateFeatures) throw;
      }
    }
    if (next && is_stabilizing(sys, {*next})) {
      out.K = *next;
      ++out.improvements;
    } else {
      ++out.unstable_updates;
    }
    out.cost_history.push_back(lqr_cost(sys, w, {out.K}));
  }
  return out;
}

VectorXd vec(const MatrixXd& K) { return Eigen::Map<const VectorXd>(K.data(), K.size()); }

MatrixXd unvec(const VectorXd& theta, int nu, int nx) {
  require(theta.size() == static_cast<Eigen::Index>(nu) * nx, "theta has the wrong length");
  return Eigen::Map<const MatrixXd>(theta.data(), nu, nx);
}

std::string_view to_string(Baseline b) {
  return b == Baseline::kSimple ? "simple" : "value_function";
}

GradientEstimate pg_gradient_estimate(const LinearSystem& sys, const LqrWeights& w,
                                      const VectorXd& theta, const PgOptions& options,
                                      std::uint64_t seed) {
  require(options.horizon >= 1, "PG horizon must be positive");
  require(options.sigma > 0.0, "PG exploration std must be positive");
  const int nx = sys.nx();
  const int nu = sys.nu();
  const MatrixXd K = unvec(theta, nu, nx);
  const long T = options.horizon;
  GradientEstimate out;
  out.samples = T;

  MatrixXd V;
  if (options.baseline == Baseline::kValueFunction) {
    if (!is_stabilizing(sys, {K})) {
      out.overflow = true;
      return out;
    }
    V = solve_dlyap(sys.A + sys.B * K, w.Q + K.transpose() * w.R * K);
  }

  Rng noise(seed, 1);
  Rng explore(seed, 2);
  std::vector<VectorXd> xs(T);
  std::vector<VectorXd> etas(T);
  std::vector<double> costs(T);
  VectorXd x = VectorXd::Zero(nx);
  for (long t = 0; t < T; ++t) {
    etas[t] = explore.normal_vector(nu, options.sigma);
    const VectorXd u = K * x + etas[t];
    costs[t] = x.dot(w.Q * x) + u.dot(w.R * u);
    xs[t] = x;
    x = sys.A * x + sys.B * u + noise.normal_vector(nx, sys.sigma_w);
    if (!(x.lpNorm<Eigen::Infinity>() <= options.blowup_bound)) {
      out.overflow = true;
      return out;
    }
  }
  double total = 0.0;
  for (double c : costs) total += c;
  out.average_cost = total / T;

  const double per_step = options.baseline_cost.value_or(out.average_cost);
  MatrixXd G = MatrixXd::Zero(nu, nx);
  double tail = total;
  for (long t = 0; t < T; ++t) {
    double b = static_cast<double>(T - t) * per_step;
    if (options.baseline == Baseline::kValueFunction) b += xs[t].dot(V * xs[t]);
    G.noalias() += (tail - b) * etas[t] * xs[t].transpose();
    tail -= costs[t];
  }
  out.g = vec(G) / (static_cast<double>(T) * options.sigma * options.sigma);
  return out;
}

CostEval rollout_cost(const LinearSystem& sys, const LqrWeights& w, long horizon,
                      double blowup_bound) {
  require(horizon >= 1, "rollout horizon must be positive");
  return [sys, w, horizon, blowup_bound](const VectorXd& theta,
                                          std::uint64_t seed) -> std::optional<double> {
    const MatrixXd K = unvec(theta, sys.nu(), sys.nx());
    Rng noise(seed, 1);
    VectorXd x = VectorXd::Zero(sys.nx());
    double total = 0.0;
    for (long t = 0; t < horizon; ++t) {
      const VectorXd u = K * x;
      total += x.dot(w.Q * x) + u.dot(w.R * u);
      x = sys.A * x + sys.B * u + noise.normal_vector(sys.nx(), sys.sigma_w);
      if (!(x.lpNorm<Eigen::Infinity>() <= blowup_bound)) return std::nullopt;
    }
    return total / horizon;
  };
}

GradientEstimate dfo_gradient_estimate(const CostEval& cost, const VectorXd& theta,
                                       double sigma, long horizon, std::uint64_t seed) {
  require(sigma > 0.0, "DFO smoothing radius must be positive");
  Rng rng(seed, 3);
  const VectorXd xi = rng.normal_vector(theta.size());
  const std::uint64_t shared = iteration_seed(seed, -2);
  const auto plus = cost(theta + sigma * xi, shared);
  const auto minus = cost(theta - sigma * xi, shared);
  GradientEstimate out;
  out.samples = 2 * horizon;
  if (!plus || !minus) {
    out.overflow = true;
    return out;
  }
  out.average_cost = 0.5 * (*plus + *minus);
  out.g = (*plus - *minus) / (2.0 * sigma) * xi;
  return out;
}

MatrixXd project_spectral_ball(const MatrixXd& K, double radius) {
  if (radius <= 0.0) return K;
  Eigen::JacobiSVD<MatrixXd> svd(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd s = svd.singularValues();
  if (s.size() == 0 || s(0) <= radius) return K;
  return svd.matrixU() * s.cwiseMin(radius).asDiagonal() * svd.matrixV().transpose();
}

double relative_error(const LinearSystem& sys, const LqrWeights& w, const MatrixXd& K) {
  const double J_star = lqr_cost(sys, w, solve_dare(sys, w).K);
  const double J = lqr_cost(sys, w, {K});
  return (J - J_star) / J_star;
}

SgdResult sgd_train(const GradientOracle& estimator, const VectorXd& theta0,
                    const SgdOptions& options, const LinearSystem& sys, const LqrWeights& w,
                    std::uint64_t seed) {
  require(options.step >= 0.0 && options.radius >= 0.0 && options.budget >= 0,
          "invalid SGD options");
  const int nx = sys.nx();
  const int nu = sys.nu();
  const double J_star = lqr_cost(sys, w, solve_dare(sys, w).K);
  auto row = [&](long it, long used, const VectorXd& th) {
    const double J = lqr_cost(sys, w, {unvec(th, nu, nx)});
    return SgdRow{it, used, J, (J - J_star) / J_star};
  };

  SgdResult out;
  out.theta = vec(project_spectral_ball(unvec(theta0, nu, nx), options.radius));
  out.history.push_back(row(0, 0, out.theta));
  VectorXd previous = out.theta;
  long used = 0;
  long last = 0;
  for (long k = 0; k < options.max_iters; ++k) {
    if (last > 0 && used + last > options.budget) break;
    const GradientEstimate est = estimator(out.theta, iteration_seed(seed, k));
    if (used + est.samples > options.budget) break;
    used += est.samples;
    last = est.samples;
    if (est.overflow) {
      ++out.sentinel_iters;
      out.theta = previous;
    } else {
      previous = out.theta;
      const MatrixXd K = unvec(out.theta - options.step * est.g, nu, nx);
      out.theta = vec(project_spectral_ball(K, options.radius));
    }
    out.history.push_back(row(k + 1, used, out.theta));
  }
  return out;
}

std::optional<MatrixXd> nominal_controller(const LinearSystem& sys, const LqrWeights& w,
                                           long samples, double sigma_u, std::uint64_t seed) {
  require(samples >= sys.nx() + sys.nu(), "nominal controller needs n_x + n_u samples");
  Rng excite(seed, 2);
  const Policy policy = [&](const VectorXd&) -> VectorXd {
    return excite.normal_vector(sys.nu(), sigma_u);
  };
  const Trajectory traj = simulate(sys, policy, w, static_cast<int>(samples), seed);
  try {
    const sysid::ModelEstimate est = sysid::estimate_single_trajectory(traj);
    return solve_dare(est.as_system(sys.sigma_w), w).K.K;
  } catch (const Error&) {
    return std::nullopt;
  }
}

void write_history_csv(const std::filesystem::path& path, const std::vector<SgdRow>& rows) {
  CsvWriter csv(path, {"iteration", "samples_used", "J_theta", "rel_error"});
  for (const auto& r : rows) {
    csv.cell(r.iteration).cell(r.samples_used).cell(r.J_theta).cell(r.rel_error);
    csv.end_row();
  }
}

}  // namespace regretlab::model_free
