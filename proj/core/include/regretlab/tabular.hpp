#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace regretlab::tabular {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class CostNoise { kDeterministic, kBernoulliScaled };
std::string_view to_string(CostNoise noise);
CostNoise parse_cost_noise(std::string_view name);

struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<MatrixXd> p;  // p[u](x, y) = p(y | x, u)
  MatrixXd c;               // mean costs, n_states x n_actions, in [0, 1]
  CostNoise noise = CostNoise::kDeterministic;
  std::optional<double> discount;

  void validate(double tol = 1e-12) const;
  // Row p(. | x, u).
  VectorXd row(int x, int u) const { return p[u].row(x).transpose(); }
};

nlohmann::json to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& j);
TabularMdp load_mdp(const std::filesystem::path& path);

using Policy = std::vector<int>;

struct GainBias {
  Policy policy;
  VectorXd g;  // per-state gain
  VectorXd h;  // bias with h(0) = 0
  int iterations = 0;
};

// Transition matrix and cost vector of a stationary deterministic policy.
MatrixXd policy_matrix(const TabularMdp& mdp, const Policy& pi);
VectorXd policy_costs(const TabularMdp& mdp, const Policy& pi);

// Max over states of |g + h - c_pi - P_pi h|.
double bellman_residual(const TabularMdp& mdp, const GainBias& gb);

// Exact evaluation by a linear solve. Throws Reducible when the chain of pi
// is not irreducible.
GainBias policy_gain_bias(const TabularMdp& mdp, const Policy& pi);

// Relative value iteration, stopping when sp(T h - h) <= tol. When the
// iteration cycles it retries once on the aperiodic mixture
// p' = (p + I) / 2 and then throws NonConvergent.
GainBias average_value_iteration(const TabularMdp& mdp, double tol = 1e-11,
                                 int max_iter = 1'000'000);

struct DiscountedSolution {
  VectorXd V;
  Policy policy;
  int iterations = 0;
};

DiscountedSolution discounted_value_iteration(const TabularMdp& mdp, double gamma,
                                              double tol = 1e-10, int max_iter = 10'000'000);

// Max over ordered state pairs of the minimal expected hitting time, and at
// least 1 (a single-state MDP has D = 1). +inf when some state cannot reach
// another.
double diameter(const TabularMdp& mdp, double tol = 1e-10);

// Bernoulli kl(a, b) with 0 log 0 = 0; +inf without absolute continuity.
double bernoulli_kl(double a, double b);

// Transition KL at (x, u) plus the KL of the cost distributions.
double kl_pair(const TabularMdp& phi, const TabularMdp& psi, int x, int u);

// log(T) sum over suboptimal pairs of 1 / gap. Throws DegenerateGaps when a
// state has more than one optimal action.
double decoupled_lower_bound(const TabularMdp& mdp, double T, double gap_tol = 1e-9);

struct Ucrl2Options {
  double cost_radius = 3.5;        // r_c = sqrt(cost_radius log(2 S A t / delta) / max(1, N))
  double transition_radius = 14.0; // r_p = sqrt(transition_radius S log(2 A t / delta) / max(1, N))
  int evi_max_iter = 100000;
};

struct Ucrl2Episode {
  long start = 0;
  double optimistic_gain = 0.0;
  bool truth_in_set = false;  // the true model satisfies every confidence constraint
};

struct TabularRegretTrace {
  double g_star = 0.0;
  std::vector<double> cost;        // c_1 .. c_T
  std::vector<double> cum_cost;
  std::vector<int> episode_of;
  std::vector<Ucrl2Episode> episodes;
  MatrixXd visits;                 // N_xu at the end of the run
  std::optional<double> diameter;

  long length() const { return static_cast<long>(cost.size()); }
  // sum_{s <= t} c_s - t g*, t = 1..T.
  double regret(long t) const;
};

TabularRegretTrace ucrl2_run(const TabularMdp& mdp, double delta, long T, std::uint64_t seed,
                             const Ucrl2Options& options = {});

// 34 D S sqrt(A T log(T / delta)).
double ucrl2_regret_envelope(double D, int S, int A, double T, double delta);

// Columns t, cost, regret, episode at the given times (all when empty).
void write_trace_csv(const std::filesystem::path& path, const TabularRegretTrace& trace,
                     const std::vector<long>& times = {});

// Single-state bandit with the given mean costs.
TabularMdp bandit(const std::vector<double>& costs, CostNoise noise = CostNoise::kBernoulliScaled);
// Chain of n states: action 0 drifts left, action 1 swims right against the
// current. Costs are 0.95 for resting at the left end, 0 at the right end
// swimming, 1 elsewhere.
TabularMdp river_swim(int n = 4, CostNoise noise = CostNoise::kDeterministic);
// Strictly positive random kernel and uniform costs.
TabularMdp random_mdp(int n_states, int n_actions, std::uint64_t seed);

std::vector<std::string> mdp_preset_names();
TabularMdp mdp_preset(const std::string& name);

}  // namespace regretlab::tabular
