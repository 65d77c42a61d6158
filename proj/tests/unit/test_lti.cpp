#include <cmath>

#include <gtest/gtest.h>
#include <Eigen/Dense>
#include <Eigen/LU>

#include "regretlab/error.hpp"
#include "regretlab/lti.hpp"
#include "regretlab/presets.hpp"

using namespace regretlab;

namespace {

MatrixXd dare_residual(const LinearSystem& s, const LqrWeights& w, const MatrixXd& P) {
  const MatrixXd BtPA = s.B.transpose() * P * s.A;
  const MatrixXd G = w.R + s.B.transpose() * P * s.B;
  return s.A.transpose() * P * s.A - P - BtPA.transpose() * G.ldlt().solve(BtPA) + w.Q;
}

// vec(M'VM) = (M' kron M') vec(V), column-major.
MatrixXd kronecker_dlyap(const MatrixXd& M, const MatrixXd& W) {
  const int n = static_cast<int>(M.rows());
  const MatrixXd Mt = M.transpose();
  MatrixXd K(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) K.block(i * n, j * n, n, n) = Mt(i, j) * Mt;
  const MatrixXd lhs = MatrixXd::Identity(n * n, n * n) - K;
  const VectorXd v = lhs.fullPivLu().solve(Eigen::Map<const VectorXd>(W.data(), n * n));
  return Eigen::Map<const MatrixXd>(v.data(), n, n);
}

}  // namespace

TEST(Dare, ScalarGoldenRatio) {
  LinearSystem s{MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), 1.0};
  LqrWeights w{MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1)};
  const auto d = solve_dare(s, w);
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  EXPECT_NEAR(d.P(0, 0), phi, 1e-10);
  EXPECT_NEAR(d.K.K(0, 0), -1.0 / phi, 1e-10);
}

TEST(Dare, ExampleResidual) {
  const auto s = presets::example_dynamics();
  for (double q : {1e-3, 1.0, 10.0}) {
    const auto w = presets::example_weights(q);
    const auto d = solve_dare(s, w);
    EXPECT_LE(dare_residual(s, w, d.P).norm(), 1e-9) << "q = " << q;
    EXPECT_TRUE(is_stabilizing(s, d.K));
  }
}

TEST(Dare, CostMatchesTrace) {
  auto s = presets::example_dynamics(2.0);
  const auto w = presets::example_weights(10.0);
  const auto d = solve_dare(s, w);
  EXPECT_NEAR(lqr_cost(s, w, d.K), 4.0 * d.P.trace(), 1e-8 * d.P.trace());
}

TEST(Dare, UnstabilizableThrows) {
  MatrixXd A(2, 2);
  A << 2, 0, 0, 0.5;
  MatrixXd B(2, 1);
  B << 0, 1;
  LinearSystem s{A, B, 1.0};
  LqrWeights w{MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1)};
  EXPECT_THROW(solve_dare(s, w, 1e-10, 2000), Error);
}

TEST(Dlyap, MatchesKroneckerSolve) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1e-3);
  const MatrixXd K = solve_dare(s, w).K.K;
  const MatrixXd M = s.A + s.B * K;
  const MatrixXd W = w.Q + K.transpose() * w.R * K;
  const MatrixXd V = solve_dlyap(M, W);
  EXPECT_LE((V - kronecker_dlyap(M, W)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Dlyap, NonSymmetricRandom) {
  MatrixXd M(3, 3);
  M << 0.5, 0.2, -0.1, 0.0, -0.7, 0.3, 0.4, 0.1, 0.2;
  MatrixXd W(3, 3);
  W << 2, 0.5, 0, 0.5, 1, 0.1, 0, 0.1, 3;
  EXPECT_LE((solve_dlyap(M, W) - kronecker_dlyap(M, W)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Dlyap, UnstableThrows) {
  MatrixXd M = 1.01 * MatrixXd::Identity(2, 2);
  EXPECT_THROW(solve_dlyap(M, MatrixXd::Identity(2, 2)), Error);
}

TEST(Cost, UnstableIsInfinite) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  EXPECT_TRUE(std::isinf(lqr_cost(s, w, {MatrixXd::Zero(3, 3)})));
}

TEST(Norms, ScalarFir) {
  std::vector<MatrixXd> taps{MatrixXd::Constant(1, 1, 1.0), MatrixXd::Constant(1, 1, 0.5)};
  EXPECT_NEAR(hinf_norm(taps), 1.5, 1e-12);
  EXPECT_NEAR(resolvent_hinf_norm(MatrixXd::Constant(1, 1, 0.5)), 2.0, 1e-12);
  EXPECT_NEAR(resolvent_hinf_norm(MatrixXd::Constant(1, 1, -0.5)), 2.0, 1e-12);
}

TEST(Norms, SpectralNormMatchesSvd) {
  MatrixXd M(3, 2);
  M << 1, 2, -3, 0.5, 0.1, 4;
  EXPECT_NEAR(spectral_norm(M), Eigen::JacobiSVD<MatrixXd>(M).singularValues()(0), 1e-8);
}

TEST(Norms, H2OfStaticGainResponse) {
  // The H2 norm of the truncated closed-loop response converges to sqrt(J / sigma_w^2).
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  const auto K = solve_dare(s, w).K;
  const auto resp = fir_from_static_gain(s.A, s.B, K.K, 200);
  EXPECT_NEAR(h2_norm(resp, w), std::sqrt(lqr_cost(s, w, K)), 1e-8);
}

TEST(Simulate, DeterministicAndOverflow) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  const auto K = solve_dare(s, w).K;
  const auto a = simulate(s, linear_policy(K), w, 50, 9);
  const auto b = simulate(s, linear_policy(K), w, 50, 9);
  ASSERT_EQ(a.length(), 50);
  for (int t = 0; t <= 50; ++t) EXPECT_EQ(a.states[t], b.states[t]);
  LinearSystem blow{10.0 * MatrixXd::Identity(3, 3), s.B, 1.0};
  SimulationOptions opt;
  opt.blowup_bound = 1e3;
  const auto c = simulate(blow, linear_policy({MatrixXd::Zero(3, 3)}), w, 100, 1, opt);
  EXPECT_TRUE(c.overflow);
  EXPECT_LT(c.length(), 100);
}

TEST(Closed, AverageCostMatchesLqrCost) {
  const auto s = presets::example_dynamics(1.5);
  const auto w = presets::example_weights(1.0);
  const auto K = solve_dare(s, w).K;
  const MatrixXd M = s.A + s.B * K.K;
  const MatrixXd W = w.Q + K.K.transpose() * w.R * K.K;
  EXPECT_NEAR(closed_loop_average_cost(M, MatrixXd::Identity(3, 3), W, 1.5), lqr_cost(s, w, K),
              1e-8);
}
