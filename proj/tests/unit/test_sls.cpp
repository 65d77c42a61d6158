#include <cmath>

#include <gtest/gtest.h>
#include <Eigen/Eigenvalues>

#include "regretlab/presets.hpp"
#include "regretlab/sls.hpp"

using namespace regretlab;

namespace {

sysid::ModelEstimate exact_model(const LinearSystem& s, double eps_A = 0.0, double eps_B = 0.0) {
  sysid::ModelEstimate est;
  est.A_hat = s.A;
  est.B_hat = s.B;
  est.eps_A = eps_A;
  est.eps_B = eps_B;
  return est;
}

sls::SlsProblem problem(const sysid::ModelEstimate& est, const LqrWeights& w, int F = 32) {
  sls::SlsProblem p;
  p.estimate = est;
  p.weights = w;
  p.horizon = F;
  p.max_horizon = 64;
  return p;
}

}  // namespace

TEST(Sls, ZeroUncertaintyMatchesRiccati) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  const double J_star = lqr_cost(s, w, solve_dare(s, w).K);
  const auto sol = sls::robust_synthesize(problem(exact_model(s), w));
  ASSERT_TRUE(sol.feasible) << sol.message;
  const auto m = sls::cost_under_mismatch(s, sol.response, exact_model(s), w);
  EXPECT_TRUE(m.stabilizing);
  EXPECT_LE(std::abs(m.cost - J_star) / J_star, 0.01);
  EXPECT_NEAR(m.delta_hinf, 0.0, 1e-12);
}

TEST(Sls, ResponseIsAchievable) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1e-3);
  const auto est = exact_model(s, 0.02, 0.02);
  const auto sol = sls::robust_synthesize(problem(est, w));
  ASSERT_TRUE(sol.feasible);
  const auto r = sls::achievability_residual(sol.response, est.A_hat, est.B_hat);
  EXPECT_LE(r.init, 1e-9);
  EXPECT_LE(r.max_equality(), 1e-6);
  EXPECT_LE(r.terminal, 1e-4 + 1e-9);
  // Robustness certificate is the grid norm of the scaled response.
  const double h = sls::h_alpha(sol.response, 0.02, 0.02, 0.5);
  EXPECT_LE(h, sol.gamma_used + 1e-9);
  EXPECT_GE(sol.worst_case_bound, sol.nominal_h2);
}

TEST(Sls, RingBufferMatchesStateSpaceRealization) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  const auto resp = fir_from_static_gain(s.A, s.B, solve_dare(s, w).K.K, 8);
  // Perturb the taps so the controller is genuinely dynamic.
  auto r = resp;
  r.taps_u[2] += 0.05 * MatrixXd::Ones(3, 3);
  const auto ctrl = sls::realize_controller(r);
  sls::FirControllerState online(r);
  VectorXd xi = VectorXd::Zero(ctrl.order());
  for (int t = 0; t < 30; ++t) {
    VectorXd x = VectorXd::LinSpaced(3, 0.1 * t, -0.2 * t + 1.0);
    const VectorXd u_ss = ctrl.Ck * xi + ctrl.Dk * x;
    xi = ctrl.Ak * xi + ctrl.Bk * x;
    EXPECT_LE((online.step(x) - u_ss).cwiseAbs().maxCoeff(), 1e-10) << "t = " << t;
  }
}

TEST(Sls, ClosedLoopOfStaticGainResponse) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  const auto K = solve_dare(s, w).K;
  const auto ctrl = sls::realize_controller(fir_from_static_gain(s.A, s.B, K.K, 40));
  const MatrixXd M = sls::closed_loop_matrix(s, ctrl);
  const int n = 3, m = ctrl.order();
  ASSERT_LT(spectral_radius(M), 1.0);
  // Stage cost of the augmented state z = (x, xi): u = Dk x + Ck xi.
  MatrixXd L = MatrixXd::Zero(6, n + m);
  L.topLeftCorner(3, 3) = MatrixXd::Identity(3, 3);
  L.block(3, 0, 3, n) = ctrl.Dk;
  L.block(3, n, 3, m) = ctrl.Ck;
  MatrixXd QR = MatrixXd::Zero(6, 6);
  QR.topLeftCorner(3, 3) = w.Q;
  QR.bottomRightCorner(3, 3) = w.R;
  MatrixXd E = MatrixXd::Zero(n + m, n);
  E.topRows(n) = MatrixXd::Identity(n, n);
  const double J = closed_loop_average_cost(M, E, L.transpose() * QR * L, 1.0);
  EXPECT_NEAR(J, lqr_cost(s, w, K), 1e-8);
}

TEST(Sls, LargeUncertaintyIsInfeasible) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  auto p = problem(exact_model(s, 5.0, 5.0), w, 8);
  p.max_horizon = 8;
  const auto sol = sls::robust_synthesize(p);
  EXPECT_FALSE(sol.feasible);
  EXPECT_NE(sol.status, sls::SlsStatus::kFeasible);
}

TEST(Sls, JsonRoundTrip) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1.0);
  auto p = problem(exact_model(s, 0.01, 0.01), w, 16);
  const auto sol = sls::robust_synthesize(p);
  ASSERT_TRUE(sol.feasible);
  const auto back = sls::solution_from_json(sls::to_json(sol));
  EXPECT_EQ(back.status, sol.status);
  EXPECT_DOUBLE_EQ(back.gamma_used, sol.gamma_used);
  ASSERT_EQ(back.response.horizon(), sol.response.horizon());
  EXPECT_EQ(back.response.taps_u[3], sol.response.taps_u[3]);
}

TEST(Certificate, MatchesDirectComputation) {
  const auto s = presets::example_dynamics();
  const auto w = presets::example_weights(1e-3);
  const MatrixXd K = solve_dare(s, w).K.K;
  const double k_norm = Eigen::JacobiSVD<MatrixXd>(K).singularValues()(0);
  // Resolvent norm on the same grid via complex SVD.
  const MatrixXd M = s.A + s.B * K;
  double res = 0.0;
  for (int k = 0; k < kDefaultFreqGrid; ++k) {
    const std::complex<double> z = std::polar(1.0, 2.0 * M_PI * k / kDefaultFreqGrid);
    const Eigen::MatrixXcd T = z * Eigen::MatrixXcd::Identity(3, 3) - M.cast<std::complex<double>>();
    res = std::max(res, 1.0 / Eigen::JacobiSVD<Eigen::MatrixXcd>(T).singularValues().minCoeff());
  }
  const auto c = sls::suboptimality_certificate(1e-4, 2e-4, s, w);
  EXPECT_NEAR(c.k_norm, k_norm, 1e-7);
  EXPECT_NEAR(c.resolvent_norm / res, 1.0, 1e-8);
  EXPECT_NEAR(c.product, (1e-4 + 2e-4 * k_norm) * res, 1e-8 * c.product);
  EXPECT_EQ(c.applicable, c.product <= 0.2);
}
