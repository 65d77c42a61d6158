#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "regretlab/error.hpp"
#include "regretlab/model_free.hpp"
#include "regretlab/presets.hpp"
#include "regretlab/rng.hpp"
#include "regretlab/stats.hpp"

using namespace regretlab;
using namespace regretlab::model_free;

namespace {

struct Fixture : ::testing::Test {
  LinearSystem sys = presets::model_free_system();
  LqrWeights w = presets::model_free_weights();
  MatrixXd K_star = solve_dare(sys, w).K.K;
};

// Worst |mean - oracle| / SE over coordinates.
double max_z(const std::vector<VectorXd>& g, const VectorXd& oracle) {
  double z = 0.0;
  for (int i = 0; i < oracle.size(); ++i) {
    std::vector<double> c;
    for (const auto& v : g) c.push_back(v(i));
    z = std::max(z, std::abs(mean(c) - oracle(i)) / standard_error(c));
  }
  return z;
}

}  // namespace

TEST(Features, CountAndQuadraticForm) {
  EXPECT_EQ(feature_count(5), 15);
  const VectorXd z = VectorXd::LinSpaced(5, -1.0, 2.0);
  MatrixXd H = MatrixXd::Random(5, 5);
  H = (H + H.transpose()).eval();
  const auto q = QuadraticQ::from_matrix(H);
  EXPECT_NEAR(q.w.dot(quadratic_features(z)), z.dot(H * z), 1e-12);
  const auto back = QuadraticQ::from_weights(q.w, 3, 2);
  EXPECT_LE((back.H - H).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Features, VecIsColumnMajor) {
  MatrixXd K(2, 3);
  K << 1, 2, 3, 4, 5, 6;
  const VectorXd v = vec(K);
  EXPECT_EQ(v(1), 4.0);
  EXPECT_EQ(unvec(v, 2, 3), K);
}

TEST_F(Fixture, GreedyGainOfAnalyticQIsPolicyImprovement) {
  // Policy improvement from K* returns K*.
  const auto q = QuadraticQ::from_matrix(analytic_q_matrix(sys, w, K_star));
  const auto K = q.greedy_gain(sys.nx());
  ASSERT_TRUE(K.has_value());
  EXPECT_LE((*K - K_star).cwiseAbs().maxCoeff(), 1e-8);
}

TEST_F(Fixture, LstdqNoiselessRecoversAnalyticH) {
  LinearSystem quiet = sys;
  quiet.sigma_w = 0.0;
  const MatrixXd K = 0.5 * K_star;
  Rng explore(5, 2);
  const MatrixXd Kb = 0.3 * K_star;
  const Policy behavior = [&](const VectorXd& x) -> VectorXd {
    return Kb * x + explore.normal_vector(sys.nu());
  };
  SimulationOptions opt;
  opt.x0 = VectorXd::Ones(sys.nx());
  const auto data = simulate(quiet, behavior, w, 200, 1, opt);
  const MatrixXd H = analytic_q_matrix(sys, w, K);
  EXPECT_LE((lstdq(data, K, 0.0).H - H).cwiseAbs().maxCoeff(), 1e-6);
  const auto joint = lstdq_joint(data, K);
  EXPECT_LE((joint.H - H).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(joint.lambda, 0.0, 1e-6);
}

TEST_F(Fixture, LstdqDegenerateData) {
  LinearSystem quiet = sys;
  quiet.sigma_w = 0.0;
  const auto data = simulate(quiet, linear_policy({K_star}), w, 200, 1);  // x stays at 0
  EXPECT_THROW(lstdq(data, K_star, 0.0), Error);
}

TEST_F(Fixture, LspiNoiselessFixedPoint) {
  LinearSystem quiet = sys;
  quiet.sigma_w = 0.0;
  LspiOptions o;
  o.iters = 3;
  o.steps_per_iter = 300;
  const auto r = lspi(quiet, w, K_star, o, 3);
  EXPECT_LE((r.K - K_star).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(r.unstable_updates, 0);
}

TEST_F(Fixture, LspiImprovesFromZero) {
  LspiOptions o;
  o.iters = 5;
  o.steps_per_iter = 20000;
  const auto r = lspi(sys, w, MatrixXd::Zero(sys.nu(), sys.nx()), o, 11);
  EXPECT_LT(relative_error(sys, w, r.K), relative_error(sys, w, MatrixXd::Zero(2, 3)));
  EXPECT_LT(relative_error(sys, w, r.K), 0.1);
}

TEST_F(Fixture, PolicyGradientUnbiased) {
  const long T = 20;
  MatrixXd K = MatrixXd::Zero(2, 3);
  K(0, 0) = -0.3;
  const VectorXd fd = oracle::finite_difference_gradient(sys, w, K, T, 1.0);
  for (auto b : {Baseline::kSimple, Baseline::kValueFunction}) {
    PgOptions o;
    o.horizon = T;
    o.baseline = b;
    o.baseline_cost = oracle::finite_horizon_cost(sys, w, K, T, 1.0);
    std::vector<VectorXd> g;
    for (int s = 0; s < 2000; ++s) g.push_back(pg_gradient_estimate(sys, w, vec(K), o, s).g);
    EXPECT_LE(max_z(g, fd), 3.0) << to_string(b);
  }
}

TEST_F(Fixture, ValueFunctionBaselineReducesVariance) {
  const long T = 100;
  PgOptions o;
  o.horizon = T;
  o.baseline_cost = oracle::finite_horizon_cost(sys, w, K_star, T, 1.0);
  double var[2] = {0.0, 0.0};
  for (int b = 0; b < 2; ++b) {
    o.baseline = b ? Baseline::kValueFunction : Baseline::kSimple;
    std::vector<std::vector<double>> g(6);
    for (int s = 0; s < 400; ++s) {
      const auto e = pg_gradient_estimate(sys, w, vec(K_star), o, s);
      for (int i = 0; i < 6; ++i) g[i].push_back(e.g(i));
    }
    for (const auto& c : g) var[b] += variance(c);
  }
  EXPECT_LT(var[1], var[0]);
}

TEST_F(Fixture, DerivativeFreeUnbiased) {
  const long T = 20;
  const MatrixXd K = 0.5 * K_star;
  const VectorXd fd = oracle::finite_difference_gradient(sys, w, K, T, 0.0);
  const auto cost = rollout_cost(sys, w, T);
  std::vector<VectorXd> g;
  for (int s = 0; s < 2000; ++s) g.push_back(dfo_gradient_estimate(cost, vec(K), 0.01, T, s).g);
  EXPECT_LE(max_z(g, fd), 3.0);
}

TEST_F(Fixture, RolloutCostIsCommonRandomNumbers) {
  const auto cost = rollout_cost(sys, w, 50);
  EXPECT_EQ(*cost(vec(K_star), 4), *cost(vec(K_star), 4));
  EXPECT_NE(*cost(vec(K_star), 4), *cost(vec(K_star), 5));
}

TEST(Projection, ClipsSingularValues) {
  MatrixXd K(2, 3);
  K << 3, 0, 0, 0, 1, 0;
  const MatrixXd P = project_spectral_ball(K, 2.0);
  EXPECT_NEAR(spectral_norm(P), 2.0, 1e-9);
  EXPECT_NEAR(P(1, 1), 1.0, 1e-12);
  EXPECT_EQ(project_spectral_ball(K, 5.0), K);
}

TEST_F(Fixture, SgdRevertsOnOverflow) {
  int calls = 0;
  GradientOracle oracle = [&](const VectorXd& th, std::uint64_t) {
    GradientEstimate e;
    e.samples = 10;
    if (++calls % 2 == 0) {
      e.overflow = true;
      return e;
    }
    e.g = th - vec(K_star);
    return e;
  };
  SgdOptions o;
  o.step = 0.5;
  o.budget = 200;
  const auto r = sgd_train(oracle, VectorXd::Zero(6), o, sys, w, 0);
  EXPECT_EQ(r.sentinel_iters, 10);
  EXPECT_EQ(r.history.front().iteration, 0);
  // An overflow at theta_1 discards it and returns to theta_0, so the
  // alternating oracle never gets past the first step.
  EXPECT_LE(r.theta.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((r.history[1].J_theta - lqr_cost(sys, w, {0.5 * K_star})), 1e-9);
  EXPECT_EQ(r.history.back().samples_used, 200);
}

TEST_F(Fixture, NominalControllerConverges) {
  const auto K = nominal_controller(sys, w, 20000, 1.0, 1);
  ASSERT_TRUE(K.has_value());
  EXPECT_LT(relative_error(sys, w, *K), 1e-2);
  EXPECT_NEAR(relative_error(sys, w, K_star), 0.0, 1e-12);
}
