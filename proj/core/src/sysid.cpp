#include "regretlab/sysid.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "regretlab/csv.hpp"
#include "regretlab/error.hpp"
#include "regretlab/rng.hpp"
#include "regretlab/stats.hpp"

namespace regretlab::sysid {

std::string_view to_string(ErrorSource source) {
  switch (source) {
    case ErrorSource::kTheoryBound: return "theory";
    case ErrorSource::kOracleTrue: return "oracle";
    case ErrorSource::kBootstrap: return "bootstrap";
  }
  return "unknown";
}

ErrorSource parse_error_source(std::string_view name) {
  if (name == "theory") return ErrorSource::kTheoryBound;
  if (name == "oracle") return ErrorSource::kOracleTrue;
  if (name == "bootstrap") return ErrorSource::kBootstrap;
  fail(ErrorCode::kConfig, "unknown error source '" + std::string(name) + "'");
}

RolloutBatch collect_rollouts(const LinearSystem& sys, int N, int T, double sigma_u,
                              std::uint64_t seed, bool all_steps) {
  sys.validate();
  require(N >= 1 && T >= 0, "collect_rollouts: need N >= 1 and T >= 0");
  require(sigma_u > 0.0, "collect_rollouts: sigma_u must be positive");
  Rng rng(seed);
  RolloutBatch batch;
  batch.horizon = T;
  batch.sigma_u = sigma_u;
  batch.all_steps = all_steps;
  batch.transitions.reserve(all_steps ? static_cast<std::size_t>(N) * (T + 1) : N);
  for (int i = 0; i < N; ++i) {
    VectorXd x = VectorXd::Zero(sys.nx());
    for (int t = 0; t <= T; ++t) {
      const VectorXd u = rng.normal_vector(sys.nu(), sigma_u);
      const VectorXd next = sys.A * x + sys.B * u + rng.normal_vector(sys.nx(), sys.sigma_w);
      if (all_steps || t == T) batch.transitions.push_back({x, u, next});
      x = next;
    }
  }
  return batch;
}

RegressionAccumulator::RegressionAccumulator(int nx, int nu)
    : nx_(nx),
      nu_(nu),
      gram_(MatrixXd::Zero(nx + nu, nx + nu)),
      cross_(MatrixXd::Zero(nx + nu, nx)) {
  require(nx >= 1 && nu >= 1, "regression needs n_x, n_u >= 1");
}

void RegressionAccumulator::add(const VectorXd& x, const VectorXd& u, const VectorXd& x_next) {
  VectorXd z(nx_ + nu_);
  z << x, u;
  gram_.selfadjointView<Eigen::Lower>().rankUpdate(z);
  cross_.noalias() += z * x_next.transpose();
  ++count_;
}

ModelEstimate RegressionAccumulator::solve(const LeastSquaresOptions& options) const {
  const int p = nx_ + nu_;
  const MatrixXd gram = gram_.selfadjointView<Eigen::Lower>();
  bool singular = count_ < p;
  if (!singular) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    const double hi = es.eigenvalues().maxCoeff();
    const double lo = es.eigenvalues().minCoeff();
    singular = !(hi > 0.0) || lo <= 1e-12 * hi;
  }
  MatrixXd theta;
  if (singular) {
    if (!options.ridge_fallback || options.ridge_lambda <= 0.0) {
      fail(ErrorCode::kRankDeficient,
           "regressor Gram matrix is singular (" + std::to_string(count_) +
               " samples for " + std::to_string(p) + " unknowns per row)");
    }
    theta = (gram + options.ridge_lambda * MatrixXd::Identity(p, p)).ldlt().solve(cross_);
  } else {
    theta = gram.ldlt().solve(cross_);
  }
  ModelEstimate est;
  const MatrixXd ab = theta.transpose();
  est.A_hat = ab.leftCols(nx_);
  est.B_hat = ab.rightCols(nu_);
  est.samples = count_;
  return est;
}

ModelEstimate estimate_transitions(std::span<const Transition> data, int nx, int nu,
                                   const LeastSquaresOptions& options) {
  RegressionAccumulator acc(nx, nu);
  for (const auto& tr : data) acc.add(tr.x, tr.u, tr.x_next);
  return acc.solve(options);
}

ModelEstimate estimate_multi_rollout(const RolloutBatch& batch,
                                     const LeastSquaresOptions& options) {
  require(!batch.transitions.empty(), "empty rollout batch");
  const auto& first = batch.transitions.front();
  return estimate_transitions(batch.transitions, static_cast<int>(first.x.size()),
                              static_cast<int>(first.u.size()), options);
}

ModelEstimate estimate_single_trajectory(const Trajectory& traj,
                                         const LeastSquaresOptions& options) {
  require(!traj.inputs.empty(), "empty trajectory");
  const int nx = static_cast<int>(traj.states.front().size());
  const int nu = static_cast<int>(traj.inputs.front().size());
  RegressionAccumulator acc(nx, nu);
  const std::size_t steps = std::min(traj.inputs.size(), traj.states.size() - 1);
  for (std::size_t t = 0; t < steps; ++t) acc.add(traj.states[t], traj.inputs[t], traj.states[t + 1]);
  return acc.solve(options);
}

MatrixXd finite_gramian(const IdentificationSetup& s) {
  require(s.A.rows() == s.A.cols() && s.B.rows() == s.A.rows(), "gramian: bad dimensions");
  const auto nx = s.A.rows();
  MatrixXd sum = MatrixXd::Zero(nx, nx);
  MatrixXd power = MatrixXd::Identity(nx, nx);
  const MatrixXd drive =
      s.sigma_u * s.sigma_u * s.B * s.B.transpose() + s.sigma_w * s.sigma_w * MatrixXd::Identity(nx, nx);
  for (int t = 0; t <= s.horizon; ++t) {
    sum += power * drive * power.transpose();
    power = s.A * power;
  }
  return 0.5 * (sum + sum.transpose());
}

double theory_min_rollouts(int nx, int nu, double delta) {
  return 24.0 * (nx + nu) * std::log(54.0 / delta);
}

ErrorBounds theory_bound_values(const IdentificationSetup& s, long N, double delta) {
  require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
  require(N >= 1, "N must be positive");
  require(s.sigma_u > 0.0, "sigma_u must be positive");
  const int nx = static_cast<int>(s.A.rows());
  const int nu = static_cast<int>(s.B.cols());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(finite_gramian(s), Eigen::EigenvaluesOnly);
  const double lambda_min = es.eigenvalues().minCoeff();
  if (!(lambda_min > 0.0)) {
    fail(ErrorCode::kSingularGramian, "finite-time Gramian has lambda_min <= 0");
  }
  const double root = std::sqrt((2.0 * nx + nu) * std::log(54.0 / delta) / static_cast<double>(N));
  return {8.0 * s.sigma_w * root / std::sqrt(lambda_min), 8.0 * s.sigma_w / s.sigma_u * root};
}

ErrorBounds theory_error_bounds(const IdentificationSetup& s, long N, double delta) {
  require(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
  const int nx = static_cast<int>(s.A.rows());
  const int nu = static_cast<int>(s.B.cols());
  const double needed = theory_min_rollouts(nx, nu, delta);
  if (static_cast<double>(N) < needed) {
    fail(ErrorCode::kPreconditionN, "N = " + std::to_string(N) + " is below 24 (n_x + n_u) log(54/delta) = " +
                                        format_number(needed));
  }
  return theory_bound_values(s, N, delta);
}

ErrorBounds oracle_errors(const ModelEstimate& est, const LinearSystem& truth) {
  return {spectral_norm(est.A_hat - truth.A), spectral_norm(est.B_hat - truth.B)};
}

ErrorBounds bootstrap_error_bounds(const RolloutBatch& batch, const ModelEstimate& point,
                                   int resamples, double delta, std::uint64_t seed) {
  require(resamples >= 1, "bootstrap needs at least one resample");
  require(delta > 0.0 && delta < 1.0, "bootstrap delta must lie in (0, 1)");
  const int nx = static_cast<int>(point.A_hat.rows());
  const int nu = static_cast<int>(point.B_hat.cols());
  const std::size_t n = batch.size();
  Rng rng(seed, 0xB007);
  std::vector<double> errs_a, errs_b;
  for (int r = 0; r < resamples; ++r) {
    RegressionAccumulator acc(nx, nu);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& tr = batch.transitions[rng.uniform_index(n)];
      acc.add(tr.x, tr.u, tr.x_next);
    }
    try {
      const ModelEstimate est = acc.solve();
      errs_a.push_back(spectral_norm(est.A_hat - point.A_hat));
      errs_b.push_back(spectral_norm(est.B_hat - point.B_hat));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRankDeficient) throw;
    }
  }
  if (errs_a.empty()) {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, inf};
  }
  return {quantile(errs_a, 1.0 - delta), quantile(errs_b, 1.0 - delta)};
}

namespace {

std::vector<std::string> sample_header(int nx, int nu) {
  std::vector<std::string> header = {"rollout_id", "t"};
  for (int i = 0; i < nx; ++i) header.push_back("x_" + std::to_string(i));
  for (int i = 0; i < nu; ++i) header.push_back("u_" + std::to_string(i));
  return header;
}

void write_sample(CsvWriter& csv, long id, long t, const VectorXd& x, const VectorXd* u, int nu) {
  csv.cell(static_cast<long long>(id)).cell(static_cast<long long>(t));
  for (Eigen::Index i = 0; i < x.size(); ++i) csv.cell(x(i));
  for (int i = 0; i < nu; ++i) csv.cell(u ? (*u)(i) : std::numeric_limits<double>::quiet_NaN());
  csv.end_row();
}

}  // namespace

void write_rollouts_csv(const std::filesystem::path& path, const RolloutBatch& batch) {
  require(!batch.transitions.empty(), "empty rollout batch");
  const int nx = static_cast<int>(batch.transitions[0].x.size());
  const int nu = static_cast<int>(batch.transitions[0].u.size());
  CsvWriter csv(path, sample_header(nx, nu));
  const std::size_t per = batch.all_steps ? batch.horizon + 1 : 1;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch.transitions[i];
    const long id = static_cast<long>(i / per);
    const long t = batch.all_steps ? static_cast<long>(i % per) : batch.horizon;
    write_sample(csv, id, t, tr.x, &tr.u, nu);
    if ((i + 1) % per == 0) write_sample(csv, id, t + 1, tr.x_next, nullptr, nu);
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  require(!traj.states.empty(), "empty trajectory");
  const int nx = static_cast<int>(traj.states[0].size());
  const int nu = traj.inputs.empty() ? 0 : static_cast<int>(traj.inputs[0].size());
  CsvWriter csv(path, sample_header(nx, nu));
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    const VectorXd* u = t < traj.inputs.size() ? &traj.inputs[t] : nullptr;
    write_sample(csv, 0, static_cast<long>(t), traj.states[t], u, nu);
  }
}

}  // namespace regretlab::sysid
