#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "regretlab/error.hpp"
#include "regretlab/experiment.hpp"
#include "regretlab/presets.hpp"
#include "regretlab/tabular.hpp"

namespace ex = regretlab::experiment;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

int report(const std::string& kind, const std::string& message, const json& extra = json::object()) {
  json j{{"error", kind}, {"message", message}};
  j.update(extra);
  std::cerr << j.dump() << '\n';
  return kind == "config" ? kConfigError : kRuntimeError;
}

json diagnostics_json(const std::vector<ex::Diagnostic>& diags) {
  json arr = json::array();
  for (const auto& d : diags) arr.push_back({{"path", d.path}, {"message", d.message}});
  return arr;
}

// Loads and validates; returns an exit code on failure.
std::optional<int> load(const std::string& path, json& out) {
  try {
    out = ex::load_config_json(path);
  } catch (const regretlab::Error& e) {
    return report(e.code() == regretlab::ErrorCode::kIo ? "io" : "config", e.what());
  }
  const auto diags = ex::validate_config(out);
  if (!diags.empty()) {
    return report("config", "config failed validation", {{"diagnostics", diagnostics_json(diags)}});
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regretlab experiment runner"};
  app.set_version_flag("--version", std::string(ex::version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  int threads = 0;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("-o,--output", output_dir, "Override output_dir");
  run->add_option("-j,--threads", threads, "Worker threads (default: REGRETLAB_THREADS or all cores)");
  run->add_option("--seed", seed, "Override the base seed");

  auto* validate = app.add_subcommand("validate", "Check a config file and list problems");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* presets = app.add_subcommand("presets", "Inspect built-in presets");
  auto* list = presets->add_subcommand("list", "List system and MDP presets");
  presets->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kConfigError;
  }

  if (list->parsed()) {
    json j{{"systems", regretlab::presets::system_preset_names()},
           {"mdps", regretlab::tabular::mdp_preset_names()}};
    std::cout << j.dump(2) << '\n';
    return kOk;
  }

  json cfg_json;
  if (auto code = load(config_path, cfg_json)) return *code;

  if (validate->parsed()) {
    std::cout << json{{"ok", true}, {"config_hash", ex::config_hash(cfg_json)}}.dump() << '\n';
    return kOk;
  }

  if (seed) cfg_json["seed"] = *seed;
  if (!output_dir.empty()) cfg_json["output_dir"] = output_dir;
  try {
    const auto cfg = ex::parse_config(cfg_json);
    const auto rep = ex::run_experiment(cfg, threads);
    json files = json::array();
    for (const auto& f : rep.files) files.push_back(f.string());
    std::cout << json{{"ok", true},
                      {"config_hash", rep.config_hash},
                      {"wall_time_s", rep.wall_time},
                      {"files", files.size()},
                      {"output_dir", cfg.output_dir.string()}}
                     .dump()
              << '\n';
  } catch (const regretlab::Error& e) {
    if (e.code() == regretlab::ErrorCode::kConfig) return report("config", e.what());
    return report(std::string(regretlab::to_string(e.code())), e.what());
  } catch (const std::exception& e) {
    return report("runtime", e.what());
  }
  return kOk;
}
