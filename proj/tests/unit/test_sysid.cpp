#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "regretlab/csv.hpp"
#include "regretlab/error.hpp"
#include "regretlab/presets.hpp"
#include "regretlab/sysid.hpp"

using namespace regretlab;

TEST(Sysid, NoiselessRolloutsRecoverExactly) {
  auto s = presets::example_dynamics(0.0);
  const auto batch = sysid::collect_rollouts(s, 20, 6, 1.0, 1);
  EXPECT_EQ(batch.size(), 20u);
  const auto est = sysid::estimate_multi_rollout(batch);
  EXPECT_LE((est.A_hat - s.A).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((est.B_hat - s.B).cwiseAbs().maxCoeff(), 1e-10);
  const auto err = sysid::oracle_errors(est, s);
  EXPECT_LE(err.eps_A, 1e-10);
}

TEST(Sysid, RankDeficientThrows) {
  const auto s = presets::example_dynamics();
  const auto batch = sysid::collect_rollouts(s, 5, 6, 1.0, 1);
  EXPECT_THROW(sysid::estimate_multi_rollout(batch), Error);
}

TEST(Sysid, AccumulatorMatchesBatch) {
  const auto s = presets::example_dynamics();
  const auto batch = sysid::collect_rollouts(s, 200, 6, 1.0, 4);
  sysid::RegressionAccumulator acc(3, 3);
  for (const auto& t : batch.transitions) acc.add(t.x, t.u, t.x_next);
  const auto a = acc.solve();
  const auto b = sysid::estimate_multi_rollout(batch);
  EXPECT_LE((a.A_hat - b.A_hat).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Sysid, ErrorShrinksWithData) {
  const auto s = presets::example_dynamics();
  auto err = [&](int N) {
    return sysid::oracle_errors(sysid::estimate_multi_rollout(sysid::collect_rollouts(s, N, 6, 1.0, 2)), s)
        .eps_A;
  };
  EXPECT_LT(err(20000), err(200));
}

TEST(Sysid, TheoryPrecondition) {
  const auto s = presets::example_dynamics();
  const sysid::IdentificationSetup setup{s.A, s.B, 1.0, 1.0, 6};
  const double nmin = sysid::theory_min_rollouts(3, 3, 0.1);
  EXPECT_NEAR(nmin, 24.0 * 6.0 * std::log(540.0), 1e-9);
  EXPECT_THROW(sysid::theory_error_bounds(setup, static_cast<long>(nmin) - 1, 0.1), Error);
  const auto b = sysid::theory_error_bounds(setup, 2000, 0.1);
  const auto v = sysid::theory_bound_values(setup, 2000, 0.1);
  EXPECT_DOUBLE_EQ(b.eps_A, v.eps_A);
  EXPECT_GT(b.eps_A, 0.0);
  // Bounds scale as 1/sqrt(N).
  const auto b4 = sysid::theory_error_bounds(setup, 8000, 0.1);
  EXPECT_NEAR(b.eps_B / b4.eps_B, 2.0, 1e-9);
}

TEST(Sysid, RolloutCsvHeader) {
  const auto s = presets::example_dynamics();
  const auto batch = sysid::collect_rollouts(s, 3, 2, 1.0, 1);
  const auto path = std::filesystem::temp_directory_path() / "regretlab_rollouts.csv";
  sysid::write_rollouts_csv(path, batch);
  const auto table = read_csv(path);
  const std::vector<std::string> header{"rollout_id", "t", "x_0", "x_1", "x_2", "u_0", "u_1", "u_2"};
  EXPECT_EQ(table.header, header);
  EXPECT_FALSE(table.rows.empty());
  std::filesystem::remove(path);
}

TEST(Sysid, ErrorSourceNames) {
  for (auto src : {sysid::ErrorSource::kTheoryBound, sysid::ErrorSource::kOracleTrue,
                   sysid::ErrorSource::kBootstrap}) {
    EXPECT_EQ(sysid::parse_error_source(sysid::to_string(src)), src);
  }
  EXPECT_THROW(sysid::parse_error_source("guess"), Error);
}
