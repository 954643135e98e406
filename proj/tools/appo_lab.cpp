#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "appo/adpo.hpp"
#include "appo/harness.hpp"
#include "appo/instance_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitViolation = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Run a single seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--override", f.overrides, "key=value, repeatable")->take_all();
}

appo::ExperimentConfig build_config(const CommonFlags& f) {
  appo::ExperimentConfig c = f.config.empty() ? appo::ExperimentConfig{} : appo::load_config(f.config);
  for (const auto& o : f.overrides) appo::apply_override(c, o);
  if (f.seed) c.seeds = {*f.seed};
  c.out_dir = f.out;
  appo::validate(c);
  return c;
}

json aggregate_json(const appo::ExperimentSummary& s, const appo::ExperimentConfig& c) {
  json doc = appo::summary_to_json(s, c);
  doc.erase("config");
  for (auto& run : doc["runs"]) run.erase("bounds");
  doc["out"] = c.out_dir.string();
  return doc;
}

int run_agents(const appo::ExperimentConfig& config) {
  const auto summary = appo::run_experiment(config);
  std::cout << aggregate_json(summary, config).dump(2) << '\n';
  for (const auto& r : summary.runs) {
    if (!r.error.empty()) return kExitUsage;
  }
  return kExitOk;
}

int gen_instance(const appo::ExperimentConfig& config) {
  const auto seed = config.seeds.front();
  const auto instance = appo::make_instance(config, seed);
  fs::create_directories(config.out_dir);
  const auto path = config.out_dir / "instance.json";
  appo::save_instance(instance, path);
  std::cout << json{{"instance", path.string()},
                    {"seed", seed},
                    {"dim", instance.dim()},
                    {"num_contexts", instance.num_contexts()},
                    {"num_actions", instance.num_actions()},
                    {"min_gap", instance.min_gap()},
                    {"kappa", instance.link().kappa()}}
                   .dump(2)
            << '\n';
  return kExitOk;
}

int run_adpo(appo::ExperimentConfig config) {
  fs::create_directories(config.out_dir);
  if (!config.adpo_gamma_grid.empty()) {
    config.adpo.gamma = appo::tune_adpo_gamma(config.adpo, config.dataset, config.adpo_gamma_grid,
                                              config.adpo_tuning_seeds, config.adpo_tolerance);
  }
  json runs = json::array();
  for (auto seed : config.seeds) {
    const auto data = appo::make_dataset(config, seed);
    if (!config.dataset_path) {
      appo::save_dataset(data, config.out_dir / ("dataset_s" + std::to_string(seed) + ".json"));
    }
    const auto run = appo::run_adpo_seed(config.adpo, data, seed);
    runs.push_back({{"adpo", appo::summary_to_json(run.adpo)},
                    {"baseline", appo::summary_to_json(run.baseline)},
                    {"query_fraction", run.baseline.queries > 0
                                           ? static_cast<double>(run.adpo.queries) /
                                                 static_cast<double>(run.baseline.queries)
                                           : 0.0}});
  }
  json doc{{"format", "appo-adpo-summary/1"},
           {"gamma", config.adpo.gamma},
           {"config", appo::config_to_json(config)},
           {"runs", runs}};
  std::ofstream(config.out_dir / "adpo_summary.json") << doc.dump(1) << '\n';
  for (auto& r : doc["runs"]) {
    r["adpo"].erase("theta");
    r["baseline"].erase("theta");
  }
  doc.erase("config");
  std::cout << doc.dump(2) << '\n';
  return kExitOk;
}

int check_bounds(const fs::path& dir) {
  const auto checks = appo::check_run_directory(dir);
  json out = json::array();
  bool violation = false;
  for (const auto& rc : checks) {
    out.push_back({{"run_id", rc.run_id}, {"report", appo::report_to_json(rc.report)}});
    violation = violation || rc.report.hard_violation();
  }
  std::cout << json{{"runs", out}, {"hard_violation", violation}}.dump(2) << '\n';
  return violation ? kExitViolation : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active preference optimization experiments"};
  app.require_subcommand(1);

  CommonFlags appo_flags, base_flags, adpo_flags, sweep_flags, gen_flags, check_flags;
  auto* run_appo = app.add_subcommand("run-appo", "Run APPO over the configured seeds");
  add_common(run_appo, appo_flags);

  auto* run_base = app.add_subcommand("run-baseline", "Run a reference agent");
  add_common(run_base, base_flags);
  std::string baseline_agent;
  run_base->add_option("--agent", baseline_agent, "oppo, random-gate or uniform")
      ->check(CLI::IsMember({"oppo", "random-gate", "uniform"}));

  auto* run_adpo_cmd = app.add_subcommand("run-adpo", "Run ADPO against the full-query baseline");
  add_common(run_adpo_cmd, adpo_flags);

  auto* sweep = app.add_subcommand("sweep", "Run every sweep setting over every seed");
  add_common(sweep, sweep_flags);

  auto* gen = app.add_subcommand("gen-instance", "Generate a problem instance");
  add_common(gen, gen_flags);

  auto* check = app.add_subcommand("check-bounds", "Re-check the bounds of a finished run directory");
  add_common(check, check_flags);
  std::string run_dir;
  check->add_option("run_dir", run_dir, "Directory holding summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_appo) {
      auto c = build_config(appo_flags);
      c.agent = appo::AgentKind::kAppo;
      return run_agents(c);
    }
    if (*run_base) {
      auto c = build_config(base_flags);
      if (!baseline_agent.empty()) c.agent = appo::agent_kind_from_string(baseline_agent);
      if (c.agent == appo::AgentKind::kAppo) c.agent = appo::AgentKind::kOppo;
      appo::validate(c);
      return run_agents(c);
    }
    if (*run_adpo_cmd) return run_adpo(build_config(adpo_flags));
    if (*sweep) return run_agents(build_config(sweep_flags));
    if (*gen) return gen_instance(build_config(gen_flags));
    if (*check) return check_bounds(run_dir.empty() ? fs::path(check_flags.out) : fs::path(run_dir));
  } catch (const appo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
