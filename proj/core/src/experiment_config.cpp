#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "regretlab/error.hpp"
#include "regretlab/experiment.hpp"
#include "regretlab/json_io.hpp"
#include "regretlab/presets.hpp"

namespace regretlab::experiment {

using nlohmann::json;

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::kFig1Stability: return "fig1_stability";
    case Kind::kFig2Regret: return "fig2_regret";
    case Kind::kModelFree: return "model_free";
    case Kind::kSysidCoverage: return "sysid_coverage";
    case Kind::kTabularRegret: return "tabular_regret";
    case Kind::kCustom: return "custom";
  }
  return "custom";
}

std::optional<Kind> parse_kind(std::string_view name) {
  static const std::pair<std::string_view, Kind> table[] = {
      {"fig1_stability", Kind::kFig1Stability}, {"Fig1Stability", Kind::kFig1Stability},
      {"fig2_regret", Kind::kFig2Regret},       {"Fig2Regret", Kind::kFig2Regret},
      {"model_free", Kind::kModelFree},         {"FigModelFree", Kind::kModelFree},
      {"sysid_coverage", Kind::kSysidCoverage}, {"SysidCoverage", Kind::kSysidCoverage},
      {"tabular_regret", Kind::kTabularRegret}, {"TabularRegret", Kind::kTabularRegret},
      {"custom", Kind::kCustom},                {"Custom", Kind::kCustom},
  };
  for (const auto& [n, k] : table) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      out += c;
      if (c == '\\' && i + 1 < text.size()) {
        out += text[++i];
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
    } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
      while (i < text.size() && text[i] != '\n') ++i;
      if (i < text.size()) out += '\n';
    } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '*') {
      i += 2;
      while (i + 1 < text.size() && !(text[i] == '*' && text[i + 1] == '/')) {
        if (text[i] == '\n') out += '\n';
        ++i;
      }
      ++i;
    } else {
      out += c;
    }
  }
  return out;
}

json parse_config_text(std::string_view text) {
  try {
    return json::parse(strip_comments(text));
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

json load_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

// Reads typed fields with defaults and records every problem it finds.
class Reader {
 public:
  std::vector<Diagnostic> diags;

  void error(const std::string& path, const std::string& message) {
    diags.push_back({path, message});
  }

  void known(const json& obj, const std::string& path, const std::set<std::string>& keys) {
    if (!obj.is_object()) return;
    for (const auto& [k, v] : obj.items()) {
      (void)v;
      if (!keys.count(k)) error(path + "/" + k, "unknown key");
    }
  }

  const json* object(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return nullptr;
    const json& v = obj.at(key);
    if (!v.is_object()) {
      error(path + "/" + key, "must be an object");
      return nullptr;
    }
    return &v;
  }

  template <class T>
  T integer(const json& obj, const std::string& key, const std::string& path, T def, T lo,
            T hi = std::numeric_limits<T>::max()) {
    if (!obj.is_object() || !obj.contains(key)) return def;
    const json& v = obj.at(key);
    const std::string p = path + "/" + key;
    if (!v.is_number_integer()) {
      error(p, "must be an integer");
      return def;
    }
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(hi)) {
        error(p, "must be at most " + std::to_string(hi));
        return def;
      }
      if (static_cast<T>(u) < lo) {
        error(p, "must be at least " + std::to_string(lo));
        return def;
      }
      return static_cast<T>(u);
    }
    const auto s = v.get<long long>();
    if (s < static_cast<long long>(lo) || (hi >= 0 && s > static_cast<long long>(hi))) {
      error(p, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return def;
    }
    return static_cast<T>(s);
  }

  double number(const json& obj, const std::string& key, const std::string& path, double def,
                double lo, double hi, bool open_lo = false, bool open_hi = false) {
    if (!obj.is_object() || !obj.contains(key)) return def;
    const json& v = obj.at(key);
    const std::string p = path + "/" + key;
    if (!v.is_number()) {
      error(p, "must be a number");
      return def;
    }
    const double x = v.get<double>();
    const bool bad_lo = open_lo ? !(x > lo) : !(x >= lo);
    const bool bad_hi = open_hi ? !(x < hi) : !(x <= hi);
    if (bad_lo || bad_hi) {
      error(p, "must lie in " + std::string(open_lo ? "(" : "[") + format(lo) + ", " + format(hi) +
                   (open_hi ? ")" : "]"));
      return def;
    }
    return x;
  }

  bool boolean(const json& obj, const std::string& key, const std::string& path, bool def) {
    if (!obj.is_object() || !obj.contains(key)) return def;
    if (!obj.at(key).is_boolean()) {
      error(path + "/" + key, "must be true or false");
      return def;
    }
    return obj.at(key).get<bool>();
  }

  std::string string(const json& obj, const std::string& key, const std::string& path,
                     const std::string& def) {
    if (!obj.is_object() || !obj.contains(key)) return def;
    if (!obj.at(key).is_string()) {
      error(path + "/" + key, "must be a string");
      return def;
    }
    return obj.at(key).get<std::string>();
  }

  template <class T>
  std::vector<T> list(const json& obj, const std::string& key, const std::string& path,
                      const std::vector<T>& def, T lo) {
    if (!obj.is_object() || !obj.contains(key)) return def;
    const json& v = obj.at(key);
    const std::string p = path + "/" + key;
    if (!v.is_array() || v.empty()) {
      error(p, "must be a non-empty array");
      return def;
    }
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if constexpr (std::is_same_v<T, std::string>) {
        if (!v[i].is_string()) {
          error(p + "/" + std::to_string(i), "must be a string");
          return def;
        }
      } else {
        const bool ok = std::is_integral_v<T> ? v[i].is_number_integer() : v[i].is_number();
        if (!ok || v[i].get<T>() < lo) {
          error(p + "/" + std::to_string(i), "must be a number >= " + format(static_cast<double>(lo)));
          return def;
        }
      }
      out.push_back(v[i].get<T>());
    }
    return out;
  }

  std::optional<MatrixXd> matrix(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return std::nullopt;
    try {
      return matrix_from_json(obj.at(key));
    } catch (const Error& e) {
      error(path + "/" + key, e.what());
      return std::nullopt;
    }
  }

  sysid::ErrorSource source(const json& obj, const std::string& key, const std::string& path,
                            sysid::ErrorSource def) {
    const std::string s = string(obj, key, path, "");
    if (s.empty()) return def;
    try {
      return sysid::parse_error_source(s);
    } catch (const Error&) {
      error(path + "/" + key, "unknown error source '" + s + "' (theory, oracle, bootstrap)");
      return def;
    }
  }

  static std::string format(double x) {
    std::ostringstream ss;
    ss << x;
    return ss.str();
  }
};

SlsSettings read_sls(Reader& r, const json& params, const std::string& path) {
  SlsSettings s;
  const json* o = r.object(params, "sls", path);
  if (!o) return s;
  const std::string p = path + "/sls";
  r.known(*o, p, {"horizon", "alpha", "gamma_points", "gamma_top", "freq_grid", "eps_V",
                  "max_horizon", "max_iter", "primal_tol", "objective_rtol"});
  s.horizon = r.integer<int>(*o, "horizon", p, s.horizon, 2, 4096);
  s.alpha = r.number(*o, "alpha", p, s.alpha, 0.0, 1.0, true, true);
  s.gamma_points = r.integer<int>(*o, "gamma_points", p, s.gamma_points, 2, 1000);
  s.gamma_top = r.number(*o, "gamma_top", p, s.gamma_top, 0.0, 1.0, true, true);
  s.freq_grid = r.integer<int>(*o, "freq_grid", p, s.freq_grid, 16, 1 << 22);
  s.eps_V = r.number(*o, "eps_V", p, s.eps_V, 0.0, 1.0);
  s.max_horizon = r.integer<int>(*o, "max_horizon", p, s.max_horizon, 2, 4096);
  s.max_iter = r.integer<int>(*o, "max_iter", p, s.max_iter, 1, 100'000'000);
  s.primal_tol = r.number(*o, "primal_tol", p, s.primal_tol, 0.0, 1.0, true);
  s.objective_rtol = r.number(*o, "objective_rtol", p, s.objective_rtol, 0.0, 1.0, true);
  if (s.max_horizon < s.horizon) r.error(p + "/max_horizon", "must be at least the horizon");
  return s;
}

void check_weights(Reader& r, const LqrWeights& w, int nx, int nu) {
  if (w.Q.rows() != nx || w.Q.cols() != nx) {
    r.error("/weights/Q", "LqrWeights.Q must be n_x x n_x");
  } else if ((w.Q - w.Q.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    r.error("/weights/Q", "LqrWeights.Q must be symmetric");
  } else {
    const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(w.Q).eigenvalues().minCoeff();
    if (lmin < -1e-10) {
      r.error("/weights/Q", "LqrWeights.Q has a negative eigenvalue " + Reader::format(lmin));
    }
  }
  if (w.R.rows() != nu || w.R.cols() != nu) {
    r.error("/weights/R", "LqrWeights.R must be n_u x n_u");
  } else if ((w.R - w.R.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    r.error("/weights/R", "LqrWeights.R must be symmetric");
  } else {
    const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(w.R).eigenvalues().minCoeff();
    if (!(lmin > 0.0)) {
      r.error("/weights/R", "LqrWeights.R must be positive definite");
    }
  }
}

MatrixXd weight_matrix(Reader& r, const json& obj, const std::string& key, int n,
                       const MatrixXd& def) {
  if (!obj.is_object() || !obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (v.is_number()) return v.get<double>() * MatrixXd::Identity(n, n);
  auto M = r.matrix(obj, key, "/weights");
  return M ? *M : def;
}

ExperimentConfig read(Reader& r, const json& j) {
  ExperimentConfig cfg;
  cfg.source = j;
  if (!j.is_object()) {
    r.error("", "config must be a JSON object");
    return cfg;
  }
  r.known(j, "", {"kind", "system", "weights", "trials", "seed", "output_dir", "params", "mdp",
                  "description"});
  if (!j.contains("kind")) {
    r.error("/kind", "missing");
  } else if (!j.at("kind").is_string() || !parse_kind(j.at("kind").get<std::string>())) {
    r.error("/kind", "unknown experiment kind");
  } else {
    cfg.kind = *parse_kind(j.at("kind").get<std::string>());
  }
  if (!j.contains("trials")) {
    r.error("/trials", "missing");
  } else {
    cfg.trials = r.integer<int>(j, "trials", "", 0, 1, 1'000'000);
  }
  cfg.seed = r.integer<std::uint64_t>(j, "seed", "", 0, 0);
  cfg.output_dir = r.string(j, "output_dir", "", "out");

  // System and weights.
  const bool needs_system = cfg.kind != Kind::kTabularRegret;
  const json* sys = r.object(j, "system", "");
  if (needs_system && !sys) {
    r.error("/system", "missing");
  } else if (sys) {
    r.known(*sys, "/system", {"preset", "A", "B", "sigma_w"});
    const double sigma_w = r.number(*sys, "sigma_w", "/system", 1.0, 0.0, 1e12);
    if (sys->contains("preset")) {
      cfg.system_name = r.string(*sys, "preset", "/system", "");
      if (!presets::has_system_preset(cfg.system_name)) {
        r.error("/system/preset", "unknown preset '" + cfg.system_name + "'");
      } else {
        cfg.system = presets::system_preset(cfg.system_name, sigma_w);
      }
      if (sys->contains("A") || sys->contains("B")) {
        r.error("/system", "give either a preset or matrices, not both");
      }
    } else {
      auto A = r.matrix(*sys, "A", "/system");
      auto B = r.matrix(*sys, "B", "/system");
      if (!A) r.error("/system/A", "missing");
      if (!B) r.error("/system/B", "missing");
      if (A && B) {
        if (A->rows() != A->cols()) r.error("/system/A", "must be square");
        else if (B->rows() != A->rows()) r.error("/system/B", "must have n_x rows");
        else cfg.system = {*A, *B, sigma_w};
      }
    }
  }
  const int nx = cfg.system.nx();
  const int nu = cfg.system.nu();
  if (nx > 0 && nu > 0) {
    cfg.weights = cfg.system_name == "modelfree_sys"
                      ? presets::model_free_weights()
                      : LqrWeights{MatrixXd::Identity(nx, nx), MatrixXd::Identity(nu, nu)};
    if (const json* w = r.object(j, "weights", "")) {
      r.known(*w, "/weights", {"Q", "R", "S"});
      if (w->contains("Q") && w->contains("S")) r.error("/weights", "Q and S are aliases");
      cfg.weights.Q = weight_matrix(r, *w, w->contains("S") ? "S" : "Q", nx, cfg.weights.Q);
      cfg.weights.R = weight_matrix(r, *w, "R", nu, cfg.weights.R);
    }
    check_weights(r, cfg.weights, nx, nu);
  }

  const json empty = json::object();
  const json* params = r.object(j, "params", "");
  const json& P = params ? *params : empty;
  const std::string pp = "/params";
  switch (cfg.kind) {
    case Kind::kFig1Stability: {
      auto& f = cfg.fig1;
      r.known(P, pp, {"n_grid", "rollout_horizon", "sigma_u", "all_steps", "eps_source", "delta",
                      "bootstrap_resamples", "sls"});
      f.all_steps = r.boolean(P, "all_steps", pp, f.all_steps);
      f.n_grid = r.list<int>(P, "n_grid", pp, f.n_grid, 1);
      f.rollout_horizon = r.integer<int>(P, "rollout_horizon", pp, f.rollout_horizon, 0, 100000);
      f.sigma_u = r.number(P, "sigma_u", pp, f.sigma_u, 0.0, 1e12, true);
      f.eps_source = r.source(P, "eps_source", pp, f.eps_source);
      f.delta = r.number(P, "delta", pp, f.delta, 0.0, 1.0, true, true);
      f.bootstrap_resamples = r.integer<int>(P, "bootstrap_resamples", pp, f.bootstrap_resamples, 1, 1000000);
      f.sls = read_sls(r, P, pp);
      if (f.all_steps && f.eps_source == sysid::ErrorSource::kTheoryBound) {
        r.error(pp + "/eps_source", "the theory bound assumes one transition per rollout");
      }
      break;
    }
    case Kind::kFig2Regret: {
      auto& f = cfg.fig2;
      r.known(P, pp, {"horizon", "C_T", "C_eta", "warmup_rollouts", "warmup_horizon", "delta",
                      "eps_source", "methods", "trace_points", "sls"});
      f.horizon = r.integer<long>(P, "horizon", pp, f.horizon, 1);
      f.C_T = r.integer<long>(P, "C_T", pp, f.C_T, 1);
      f.C_eta = r.number(P, "C_eta", pp, f.C_eta, 0.0, 1e12, true);
      f.warmup_rollouts = r.integer<int>(P, "warmup_rollouts", pp, f.warmup_rollouts, 1, 100000000);
      f.warmup_horizon = r.integer<int>(P, "warmup_horizon", pp, f.warmup_horizon, 0, 100000);
      f.delta = r.number(P, "delta", pp, f.delta, 0.0, 1.0, true);
      f.eps_source = r.source(P, "eps_source", pp, f.eps_source);
      f.trace_points = r.integer<int>(P, "trace_points", pp, f.trace_points, 2, 100000);
      if (P.contains("methods")) {
        const auto names = r.list<std::string>(P, "methods", pp, {}, std::string());
        f.methods.clear();
        for (std::size_t i = 0; i < names.size(); ++i) {
          if (names[i] == "robust") f.methods.push_back(adaptive::Mode::kRobustSls);
          else if (names[i] == "ce") f.methods.push_back(adaptive::Mode::kCertaintyEquivalent);
          else r.error(pp + "/methods/" + std::to_string(i), "unknown method (robust, ce)");
        }
      }
      f.sls = read_sls(r, P, pp);
      if (nx > 0 && f.C_T < nx + nu) r.error(pp + "/C_T", "must be at least n_x + n_u");
      if (f.warmup_rollouts < nx + nu && nx > 0) {
        r.error(pp + "/warmup_rollouts", "must be at least n_x + n_u");
      }
      break;
    }
    case Kind::kModelFree: {
      auto& f = cfg.model_free;
      r.known(P, pp, {"budgets", "methods", "sigma_u", "lspi_iters", "rollout_horizon", "pg_step",
                      "pg_sigma", "dfo_step", "dfo_sigma", "radius_factor", "write_histories"});
      f.budgets = r.list<long>(P, "budgets", pp, f.budgets, 1);
      if (P.contains("methods")) {
        f.methods = r.list<std::string>(P, "methods", pp, f.methods, std::string());
        static const std::set<std::string> ok{"nominal", "lspi", "pg_simple", "pg_vf", "dfo"};
        for (std::size_t i = 0; i < f.methods.size(); ++i) {
          if (!ok.count(f.methods[i])) {
            r.error(pp + "/methods/" + std::to_string(i),
                    "unknown method (nominal, lspi, pg_simple, pg_vf, dfo)");
          }
        }
      }
      f.sigma_u = r.number(P, "sigma_u", pp, f.sigma_u, 0.0, 1e12, true);
      f.lspi_iters = r.integer<int>(P, "lspi_iters", pp, f.lspi_iters, 1, 1000000);
      f.rollout_horizon = r.integer<long>(P, "rollout_horizon", pp, f.rollout_horizon, 1);
      f.pg_step = r.number(P, "pg_step", pp, f.pg_step, 0.0, 1e12);
      f.pg_sigma = r.number(P, "pg_sigma", pp, f.pg_sigma, 0.0, 1e12, true);
      f.dfo_step = r.number(P, "dfo_step", pp, f.dfo_step, 0.0, 1e12);
      f.dfo_sigma = r.number(P, "dfo_sigma", pp, f.dfo_sigma, 0.0, 1e12, true);
      f.radius_factor = r.number(P, "radius_factor", pp, f.radius_factor, 0.0, 1e12);
      f.write_histories = r.boolean(P, "write_histories", pp, f.write_histories);
      if (nx > 0 && spectral_radius(cfg.system.A) >= 1.0) {
        r.error("/system/A", "model-free runs start from K = 0 and need a stable A");
      }
      for (std::size_t i = 0; i < f.budgets.size(); ++i) {
        if (f.budgets[i] < std::max<long>(nx + nu, f.lspi_iters * (nx + nu) * (nx + nu))) {
          r.error(pp + "/budgets/" + std::to_string(i), "budget too small for the estimators");
        }
      }
      break;
    }
    case Kind::kSysidCoverage: {
      auto& f = cfg.sysid;
      r.known(P, pp, {"rollouts", "rollout_horizon", "sigma_u", "delta", "single_lengths",
                      "single_system"});
      f.rollouts = r.integer<long>(P, "rollouts", pp, f.rollouts, 1);
      f.rollout_horizon = r.integer<int>(P, "rollout_horizon", pp, f.rollout_horizon, 0, 100000);
      f.sigma_u = r.number(P, "sigma_u", pp, f.sigma_u, 0.0, 1e12, true);
      f.delta = r.number(P, "delta", pp, f.delta, 0.0, 1.0, true, true);
      f.single_lengths = r.list<long>(P, "single_lengths", pp, f.single_lengths, 1);
      f.single_system = r.string(P, "single_system", pp, f.single_system);
      if (!presets::has_system_preset(f.single_system)) {
        r.error(pp + "/single_system", "unknown preset '" + f.single_system + "'");
      }
      if (nx > 0 && f.rollouts < sysid::theory_min_rollouts(nx, nu, f.delta)) {
        r.error(pp + "/rollouts", "below the sample-size precondition " +
                                      Reader::format(sysid::theory_min_rollouts(nx, nu, f.delta)));
      }
      break;
    }
    case Kind::kTabularRegret: {
      auto& f = cfg.tabular;
      r.known(P, pp, {"horizon", "delta", "cost_radius", "transition_radius", "trace_points"});
      f.horizon = r.integer<long>(P, "horizon", pp, f.horizon, 2);
      f.delta = r.number(P, "delta", pp, f.delta, 0.0, 1.0, true, true);
      f.ucrl2.cost_radius = r.number(P, "cost_radius", pp, f.ucrl2.cost_radius, 0.0, 1e12);
      f.ucrl2.transition_radius =
          r.number(P, "transition_radius", pp, f.ucrl2.transition_radius, 0.0, 1e12);
      f.trace_points = r.integer<int>(P, "trace_points", pp, f.trace_points, 2, 100000);
      if (!j.contains("mdp")) {
        r.error("/mdp", "missing");
      } else {
        const json& m = j.at("mdp");
        try {
          if (m.is_string()) {
            f.mdp_name = m.get<std::string>();
            f.mdp = tabular::mdp_preset(f.mdp_name);
          } else if (m.is_object() && m.contains("preset")) {
            f.mdp_name = m.at("preset").get<std::string>();
            f.mdp = tabular::mdp_preset(f.mdp_name);
          } else {
            f.mdp_name = "inline";
            f.mdp = tabular::mdp_from_json(m);
          }
        } catch (const Error& e) {
          r.error("/mdp", e.what());
        } catch (const json::exception& e) {
          r.error("/mdp", e.what());
        }
      }
      break;
    }
    case Kind::kCustom: {
      auto& f = cfg.custom;
      r.known(P, pp, {"rollouts", "rollout_horizon", "sigma_u", "eps_source", "delta", "sls"});
      f.rollouts = r.integer<long>(P, "rollouts", pp, f.rollouts, 1);
      f.rollout_horizon = r.integer<int>(P, "rollout_horizon", pp, f.rollout_horizon, 0, 100000);
      f.sigma_u = r.number(P, "sigma_u", pp, f.sigma_u, 0.0, 1e12, true);
      f.eps_source = r.source(P, "eps_source", pp, f.eps_source);
      f.delta = r.number(P, "delta", pp, f.delta, 0.0, 1.0, true, true);
      f.sls = read_sls(r, P, pp);
      break;
    }
  }
  return cfg;
}

}  // namespace

std::vector<Diagnostic> validate_config(const json& j) {
  Reader r;
  read(r, j);
  return r.diags;
}

ExperimentConfig parse_config(const json& j) {
  Reader r;
  ExperimentConfig cfg = read(r, j);
  if (!r.diags.empty()) {
    std::string msg = "invalid config:";
    for (const auto& d : r.diags) msg += " " + (d.path.empty() ? "/" : d.path) + ": " + d.message + ";";
    msg.pop_back();
    fail(ErrorCode::kConfig, msg);
  }
  return cfg;
}

}  // namespace regretlab::experiment
