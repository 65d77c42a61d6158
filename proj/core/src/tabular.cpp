#include "regretlab/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/LU>

#include "regretlab/csv.hpp"
#include "regretlab/error.hpp"
#include "regretlab/json_io.hpp"
#include "regretlab/rng.hpp"

namespace regretlab::tabular {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double span(const VectorXd& v) { return v.maxCoeff() - v.minCoeff(); }

// One Bellman backup: returns min_u c + P h and the minimizing actions.
VectorXd bellman(const TabularMdp& mdp, const VectorXd& h, Policy* greedy) {
  VectorXd out(mdp.n_states);
  if (greedy) greedy->assign(mdp.n_states, 0);
  for (int x = 0; x < mdp.n_states; ++x) {
    double best = kInf;
    for (int u = 0; u < mdp.n_actions; ++u) {
      const double q = mdp.c(x, u) + mdp.p[u].row(x).dot(h);
      if (q < best - 1e-15) {
        best = q;
        if (greedy) (*greedy)[x] = u;
      }
    }
    out(x) = best;
  }
  return out;
}

bool reaches_all(const std::vector<std::vector<int>>& adj, int start) {
  std::vector<char> seen(adj.size(), 0);
  std::vector<int> stack{start};
  seen[start] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        stack.push_back(w);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
}

bool irreducible(const MatrixXd& P) {
  const int n = static_cast<int>(P.rows());
  std::vector<std::vector<int>> fwd(n), bwd(n);
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      if (P(x, y) > 0.0) {
        fwd[x].push_back(y);
        bwd[y].push_back(x);
      }
    }
  }
  return reaches_all(fwd, 0) && reaches_all(bwd, 0);
}

std::optional<GainBias> relative_vi(const TabularMdp& mdp, double tol, int max_iter) {
  VectorXd h = VectorXd::Zero(mdp.n_states);
  for (int k = 1; k <= max_iter; ++k) {
    Policy pi;
    const VectorXd Th = bellman(mdp, h, &pi);
    const VectorXd diff = Th - h;
    if (span(diff) <= tol) {
      GainBias gb;
      gb.policy = std::move(pi);
      gb.g = VectorXd::Constant(mdp.n_states, 0.5 * (diff.maxCoeff() + diff.minCoeff()));
      gb.h = Th.array() - Th(0);
      gb.iterations = k;
      return gb;
    }
    h = Th.array() - Th(0);
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(CostNoise noise) {
  return noise == CostNoise::kDeterministic ? "deterministic" : "bernoulli_scaled";
}

CostNoise parse_cost_noise(std::string_view name) {
  if (name == "deterministic") return CostNoise::kDeterministic;
  if (name == "bernoulli_scaled" || name == "bernoulli") return CostNoise::kBernoulliScaled;
  fail(ErrorCode::kConfig, "unknown cost noise '" + std::string(name) + "'");
}

void TabularMdp::validate(double tol) const {
  require(n_states >= 1 && n_actions >= 1, "MDP needs at least one state and one action");
  require(static_cast<int>(p.size()) == n_actions, "one transition matrix per action");
  require(c.rows() == n_states && c.cols() == n_actions, "cost matrix has the wrong shape");
  for (int u = 0; u < n_actions; ++u) {
    require(p[u].rows() == n_states && p[u].cols() == n_states,
            "transition matrix has the wrong shape");
    require(p[u].minCoeff() >= 0.0, "transition probabilities must be nonnegative");
    for (int x = 0; x < n_states; ++x) {
      require(std::abs(p[u].row(x).sum() - 1.0) <= tol,
              "p(. | " + std::to_string(x) + ", " + std::to_string(u) + ") does not sum to 1");
    }
  }
  require(c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0, "costs must lie in [0, 1]");
  if (discount) require(*discount > 0.0 && *discount < 1.0, "discount must lie in (0, 1)");
}

nlohmann::json to_json(const TabularMdp& mdp) {
  nlohmann::json p = nlohmann::json::array();
  for (int x = 0; x < mdp.n_states; ++x) {
    nlohmann::json per_x = nlohmann::json::array();
    for (int u = 0; u < mdp.n_actions; ++u) {
      std::vector<double> r(mdp.n_states);
      for (int y = 0; y < mdp.n_states; ++y) r[y] = mdp.p[u](x, y);
      per_x.push_back(r);
    }
    p.push_back(per_x);
  }
  nlohmann::json j = {{"n_states", mdp.n_states},
                      {"n_actions", mdp.n_actions},
                      {"p", p},
                      {"c", matrix_to_json(mdp.c)},
                      {"noise", std::string(to_string(mdp.noise))}};
  if (mdp.discount) j["discount"] = *mdp.discount;
  return j;
}

TabularMdp mdp_from_json(const nlohmann::json& j) {
  try {
    TabularMdp mdp;
    const auto& p = j.at("p");
    mdp.n_states = j.contains("n_states") ? j.at("n_states").get<int>()
                                          : static_cast<int>(p.size());
    mdp.n_actions = j.contains("n_actions") ? j.at("n_actions").get<int>()
                                            : static_cast<int>(p.at(0).size());
    if (static_cast<int>(p.size()) != mdp.n_states) {
      fail(ErrorCode::kConfig, "p must have n_states entries");
    }
    mdp.p.assign(mdp.n_actions, MatrixXd::Zero(mdp.n_states, mdp.n_states));
    for (int x = 0; x < mdp.n_states; ++x) {
      if (static_cast<int>(p[x].size()) != mdp.n_actions) {
        fail(ErrorCode::kConfig, "p[" + std::to_string(x) + "] must have n_actions rows");
      }
      for (int u = 0; u < mdp.n_actions; ++u) {
        const auto row = p[x][u].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != mdp.n_states) {
          fail(ErrorCode::kConfig, "transition rows must have n_states entries");
        }
        for (int y = 0; y < mdp.n_states; ++y) mdp.p[u](x, y) = row[y];
      }
    }
    mdp.c = matrix_from_json(j.at("c"));
    if (j.contains("noise")) mdp.noise = parse_cost_noise(j.at("noise").get<std::string>());
    if (j.contains("discount")) mdp.discount = j.at("discount").get<double>();
    mdp.validate(1e-9);
    return mdp;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed MDP: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) fail(ErrorCode::kConfig, e.what());
    throw;
  }
}

TabularMdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return mdp_from_json(j);
}

MatrixXd policy_matrix(const TabularMdp& mdp, const Policy& pi) {
  require(static_cast<int>(pi.size()) == mdp.n_states, "policy has the wrong length");
  MatrixXd P(mdp.n_states, mdp.n_states);
  for (int x = 0; x < mdp.n_states; ++x) {
    require(pi[x] >= 0 && pi[x] < mdp.n_actions, "policy action out of range");
    P.row(x) = mdp.p[pi[x]].row(x);
  }
  return P;
}

VectorXd policy_costs(const TabularMdp& mdp, const Policy& pi) {
  VectorXd c(mdp.n_states);
  for (int x = 0; x < mdp.n_states; ++x) c(x) = mdp.c(x, pi.at(x));
  return c;
}

double bellman_residual(const TabularMdp& mdp, const GainBias& gb) {
  const MatrixXd P = policy_matrix(mdp, gb.policy);
  const VectorXd c = policy_costs(mdp, gb.policy);
  return (gb.g + gb.h - c - P * gb.h).cwiseAbs().maxCoeff();
}

GainBias policy_gain_bias(const TabularMdp& mdp, const Policy& pi) {
  const MatrixXd P = policy_matrix(mdp, pi);
  if (!irreducible(P)) fail(ErrorCode::kReducible, "policy chain is not irreducible");
  const int n = mdp.n_states;
  // Unknowns h(1..n-1) and g; h(0) = 0.
  MatrixXd M = MatrixXd::Zero(n, n);
  for (int x = 0; x < n; ++x) {
    for (int y = 1; y < n; ++y) M(x, y - 1) = (x == y ? 1.0 : 0.0) - P(x, y);
    M(x, n - 1) = 1.0;
  }
  const VectorXd sol = M.fullPivLu().solve(policy_costs(mdp, pi));
  GainBias gb;
  gb.policy = pi;
  gb.g = VectorXd::Constant(n, sol(n - 1));
  gb.h = VectorXd::Zero(n);
  gb.h.tail(n - 1) = sol.head(n - 1);
  return gb;
}

GainBias average_value_iteration(const TabularMdp& mdp, double tol, int max_iter) {
  mdp.validate(1e-9);
  require(tol > 0.0 && max_iter >= 1, "invalid value-iteration settings");
  if (auto gb = relative_vi(mdp, tol, std::max(1, max_iter / 2))) return *gb;
  TabularMdp lazy = mdp;
  for (int u = 0; u < mdp.n_actions; ++u) {
    lazy.p[u] = 0.5 * (mdp.p[u] + MatrixXd::Identity(mdp.n_states, mdp.n_states));
  }
  auto gb = relative_vi(lazy, tol, std::max(1, max_iter - max_iter / 2));
  if (!gb) fail(ErrorCode::kNonConvergent, "relative value iteration did not converge");
  gb->h *= 0.5;
  return *gb;
}

DiscountedSolution discounted_value_iteration(const TabularMdp& mdp, double gamma, double tol,
                                              int max_iter) {
  mdp.validate(1e-9);
  require(gamma > 0.0 && gamma < 1.0, "discount must lie in (0, 1)");
  require(tol > 0.0, "tolerance must be positive");
  const double stop = tol * (1.0 - gamma) / (2.0 * gamma);
  DiscountedSolution out;
  out.V = VectorXd::Zero(mdp.n_states);
  TabularMdp scaled = mdp;
  for (auto& P : scaled.p) P *= gamma;
  for (int k = 1; k <= max_iter; ++k) {
    const VectorXd next = bellman(scaled, out.V, &out.policy);
    const double change = (next - out.V).cwiseAbs().maxCoeff();
    out.V = next;
    out.iterations = k;
    if (change <= stop) break;
  }
  bellman(scaled, out.V, &out.policy);
  return out;
}

double diameter(const TabularMdp& mdp, double tol) {
  mdp.validate(1e-9);
  const int n = mdp.n_states;
  std::vector<std::vector<int>> bwd(n);
  for (int u = 0; u < mdp.n_actions; ++u) {
    for (int x = 0; x < n; ++x) {
      for (int y = 0; y < n; ++y) {
        if (mdp.p[u](x, y) > 0.0) bwd[y].push_back(x);
      }
    }
  }
  double D = 1.0;
  for (int y = 0; y < n; ++y) {
    if (!reaches_all(bwd, y)) return kInf;
    VectorXd tau = VectorXd::Zero(n);
    for (int k = 0; k < 10'000'000; ++k) {
      VectorXd next(n);
      for (int x = 0; x < n; ++x) {
        if (x == y) {
          next(x) = 0.0;
          continue;
        }
        double best = kInf;
        for (int u = 0; u < mdp.n_actions; ++u) {
          best = std::min(best, 1.0 + mdp.p[u].row(x).dot(tau));
        }
        next(x) = best;
      }
      const double change = (next - tau).cwiseAbs().maxCoeff();
      tau = next;
      if (change <= tol * std::max(1.0, tau.maxCoeff())) break;
    }
    D = std::max(D, tau.maxCoeff());
  }
  return D;
}

double bernoulli_kl(double a, double b) {
  require(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0, "Bernoulli means must lie in [0, 1]");
  auto term = [](double p, double q) {
    if (p == 0.0) return 0.0;
    if (q == 0.0) return kInf;
    return p * std::log(p / q);
  };
  return term(a, b) + term(1.0 - a, 1.0 - b);
}

double kl_pair(const TabularMdp& phi, const TabularMdp& psi, int x, int u) {
  require(phi.n_states == psi.n_states && phi.n_actions == psi.n_actions,
          "MDPs have different shapes");
  require(phi.noise == psi.noise, "MDPs use different cost noise models");
  require(x >= 0 && x < phi.n_states && u >= 0 && u < phi.n_actions, "pair out of range");
  double kl = 0.0;
  for (int y = 0; y < phi.n_states; ++y) {
    const double p = phi.p[u](x, y);
    const double q = psi.p[u](x, y);
    if (p == 0.0) continue;
    if (q == 0.0) return kInf;
    kl += p * std::log(p / q);
  }
  if (phi.noise == CostNoise::kBernoulliScaled) {
    kl += bernoulli_kl(phi.c(x, u), psi.c(x, u));
  } else if (phi.c(x, u) != psi.c(x, u)) {
    return kInf;
  }
  return kl;
}

double decoupled_lower_bound(const TabularMdp& mdp, double T, double gap_tol) {
  require(T > 1.0, "horizon must exceed 1");
  const GainBias opt = average_value_iteration(mdp);
  const GainBias exact = policy_gain_bias(mdp, opt.policy);
  long double sum = 0.0L;
  for (int x = 0; x < mdp.n_states; ++x) {
    int optimal = 0;
    for (int u = 0; u < mdp.n_actions; ++u) {
      const double gap =
          mdp.c(x, u) + mdp.p[u].row(x).dot(exact.h) - exact.g(x) - exact.h(x);
      if (gap <= gap_tol) {
        ++optimal;
      } else {
        sum += 1.0L / gap;
      }
    }
    if (optimal != 1) {
      fail(ErrorCode::kDegenerateGaps,
           "state " + std::to_string(x) + " has " + std::to_string(optimal) + " optimal actions");
    }
  }
  return static_cast<double>(std::log(static_cast<long double>(T)) * sum);
}

double TabularRegretTrace::regret(long t) const {
  require(t >= 1 && t <= length(), "regret: t outside the trace");
  return cum_cost[t - 1] - static_cast<double>(t) * g_star;
}

namespace {

struct Evi {
  Policy policy;
  double gain = 0.0;
};

// Extended value iteration on the lazy (p + I) / 2 version of the optimistic
// model; stops when the span of successive differences is below eps.
Evi extended_value_iteration(const MatrixXd& c_lo, const std::vector<MatrixXd>& p_hat,
                             const MatrixXd& radius, double eps, int max_iter) {
  const int S = static_cast<int>(c_lo.rows());
  const int A = static_cast<int>(c_lo.cols());
  VectorXd h = VectorXd::Zero(S);
  std::vector<int> order(S);
  Evi out;
  out.policy.assign(S, 0);
  VectorXd p(S);
  for (int k = 0; k < max_iter; ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return h(a) < h(b); });
    VectorXd next(S);
    for (int x = 0; x < S; ++x) {
      double best = kInf;
      for (int u = 0; u < A; ++u) {
        p = p_hat[u].row(x).transpose();
        const int lo = order.front();
        p(lo) = std::min(1.0, p(lo) + 0.5 * radius(x, u));
        for (int i = S - 1; i >= 0 && p.sum() > 1.0; --i) {
          const int y = order[i];
          if (y == lo) continue;
          p(y) = std::max(0.0, p(y) - (p.sum() - 1.0));
        }
        const double q = c_lo(x, u) + 0.5 * (p.dot(h) + h(x));
        if (q < best - 1e-15) {
          best = q;
          out.policy[x] = u;
        }
      }
      next(x) = best;
    }
    const VectorXd diff = next - h;
    h = next.array() - next.minCoeff();
    out.gain = 0.5 * (diff.maxCoeff() + diff.minCoeff());
    if (span(diff) < eps) break;
  }
  return out;
}

}  // namespace

TabularRegretTrace ucrl2_run(const TabularMdp& mdp, double delta, long T, std::uint64_t seed,
                             const Ucrl2Options& options) {
  mdp.validate(1e-9);
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  require(T >= 1, "T must be positive");
  const int S = mdp.n_states;
  const int A = mdp.n_actions;

  TabularRegretTrace trace;
  trace.g_star = average_value_iteration(mdp).g.minCoeff();
  trace.cost.reserve(T);
  trace.cum_cost.reserve(T);
  trace.episode_of.reserve(T);

  Rng rng(seed);
  MatrixXd N = MatrixXd::Zero(S, A);
  MatrixXd cost_sum = MatrixXd::Zero(S, A);
  std::vector<MatrixXd> moves(A, MatrixXd::Zero(S, S));
  int x = 0;
  long t = 1;
  double cum = 0.0;
  while (t <= T) {
    const double logt = std::log(2.0 * S * A * static_cast<double>(t) / delta);
    MatrixXd c_lo(S, A);
    MatrixXd radius(S, A);
    std::vector<MatrixXd> p_hat(A, MatrixXd::Constant(S, S, 1.0 / S));
    bool in_set = true;
    for (int s = 0; s < S; ++s) {
      for (int u = 0; u < A; ++u) {
        const double n = std::max(1.0, N(s, u));
        const double rc = std::sqrt(options.cost_radius * logt / n);
        radius(s, u) = std::sqrt(options.transition_radius * S *
                                 std::log(2.0 * A * static_cast<double>(t) / delta) / n);
        const double c_hat = N(s, u) > 0 ? cost_sum(s, u) / N(s, u) : 0.0;
        c_lo(s, u) = std::max(0.0, c_hat - rc);
        if (N(s, u) > 0) p_hat[u].row(s) = moves[u].row(s) / N(s, u);
        if (N(s, u) > 0) {
          in_set = in_set && std::abs(c_hat - mdp.c(s, u)) <= rc &&
                   (p_hat[u].row(s) - mdp.p[u].row(s)).lpNorm<1>() <= radius(s, u);
        }
      }
    }
    const Evi evi = extended_value_iteration(c_lo, p_hat, radius,
                                             1.0 / std::sqrt(static_cast<double>(t)),
                                             options.evi_max_iter);
    const int episode = static_cast<int>(trace.episodes.size());
    trace.episodes.push_back({t, evi.gain, in_set});

    MatrixXd nu = MatrixXd::Zero(S, A);
    while (t <= T) {
      const int u = evi.policy[x];
      if (nu(x, u) >= std::max(1.0, N(x, u))) break;
      const double c = mdp.noise == CostNoise::kDeterministic
                           ? mdp.c(x, u)
                           : (rng.bernoulli(mdp.c(x, u)) ? 1.0 : 0.0);
      double r = rng.uniform();
      int y = S - 1;
      for (int z = 0; z < S; ++z) {
        r -= mdp.p[u](x, z);
        if (r < 0.0) {
          y = z;
          break;
        }
      }
      nu(x, u) += 1.0;
      cost_sum(x, u) += c;
      moves[u](x, y) += 1.0;
      cum += c;
      trace.cost.push_back(c);
      trace.cum_cost.push_back(cum);
      trace.episode_of.push_back(episode);
      x = y;
      ++t;
    }
    N += nu;
  }
  trace.visits = N;
  return trace;
}

double ucrl2_regret_envelope(double D, int S, int A, double T, double delta) {
  return 34.0 * D * S * std::sqrt(A * T * std::log(T / delta));
}

void write_trace_csv(const std::filesystem::path& path, const TabularRegretTrace& trace,
                     const std::vector<long>& times) {
  CsvWriter csv(path, {"t", "cost", "regret", "episode"});
  auto row = [&](long t) {
    csv.cell(t).cell(trace.cost[t - 1]).cell(trace.regret(t)).cell(trace.episode_of[t - 1]);
    csv.end_row();
  };
  if (times.empty()) {
    for (long t = 1; t <= trace.length(); ++t) row(t);
  } else {
    for (long t : times) row(t);
  }
}

TabularMdp bandit(const std::vector<double>& costs, CostNoise noise) {
  TabularMdp mdp;
  mdp.n_states = 1;
  mdp.n_actions = static_cast<int>(costs.size());
  mdp.p.assign(mdp.n_actions, MatrixXd::Ones(1, 1));
  mdp.c = Eigen::Map<const VectorXd>(costs.data(), mdp.n_actions).transpose();
  mdp.noise = noise;
  mdp.validate();
  return mdp;
}

TabularMdp river_swim(int n, CostNoise noise) {
  require(n >= 2, "river swim needs at least two states");
  TabularMdp mdp;
  mdp.n_states = n;
  mdp.n_actions = 2;
  mdp.p.assign(2, MatrixXd::Zero(n, n));
  mdp.c = MatrixXd::Ones(n, 2);
  for (int x = 0; x < n; ++x) {
    mdp.p[0](x, std::max(x - 1, 0)) = 1.0;
    if (x == 0) {
      mdp.p[1](x, 0) = 0.6;
      mdp.p[1](x, 1) = 0.4;
    } else if (x == n - 1) {
      mdp.p[1](x, x) = 0.6;
      mdp.p[1](x, x - 1) = 0.4;
    } else {
      mdp.p[1](x, x - 1) = 0.05;
      mdp.p[1](x, x) = 0.6;
      mdp.p[1](x, x + 1) = 0.35;
    }
  }
  mdp.c(0, 0) = 0.95;
  mdp.c(n - 1, 1) = 0.0;
  mdp.noise = noise;
  mdp.validate();
  return mdp;
}

TabularMdp random_mdp(int n_states, int n_actions, std::uint64_t seed) {
  require(n_states >= 1 && n_actions >= 1, "random MDP needs positive sizes");
  Rng rng(seed);
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.p.assign(n_actions, MatrixXd(n_states, n_states));
  for (int u = 0; u < n_actions; ++u) {
    for (int x = 0; x < n_states; ++x) {
      for (int y = 0; y < n_states; ++y) mdp.p[u](x, y) = 0.05 + rng.uniform();
      mdp.p[u].row(x) /= mdp.p[u].row(x).sum();
    }
  }
  mdp.c.resize(n_states, n_actions);
  for (int x = 0; x < n_states; ++x) {
    for (int u = 0; u < n_actions; ++u) mdp.c(x, u) = rng.uniform();
  }
  return mdp;
}

std::vector<std::string> mdp_preset_names() { return {"bandit", "riverswim4"}; }

TabularMdp mdp_preset(const std::string& name) {
  if (name == "bandit") return bandit({0.3, 0.7});
  if (name == "riverswim4") return river_swim(4);
  fail(ErrorCode::kConfig, "unknown MDP preset '" + name + "'");
}

}  // namespace regretlab::tabular
