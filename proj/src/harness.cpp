#include "appo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "appo/baselines.hpp"
#include "appo/estimator.hpp"
#include "appo/instance_io.hpp"

namespace appo {

namespace {

constexpr double kOptimismTolerance = 1e-9;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("override " + key + ": '" + value + "' is not a number");
  }
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("override " + key + ": '" + value + "' is not an integer");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const long v = parse_long(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError("override " + key + ": '" + value + "' is out of range");
  }
  return static_cast<int>(v);
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  const long v = parse_long(key, value);
  if (v < 0) throw ConfigError("override " + key + ": seeds must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError("override " + key + ": '" + value + "' is not a boolean");
}

// "1..20" or "1,2,5".
std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> seeds;
  const auto dots = value.find("..");
  if (dots != std::string::npos) {
    const auto lo = parse_seed(key, trim(value.substr(0, dots)));
    const auto hi = parse_seed(key, trim(value.substr(dots + 2)));
    if (hi < lo) throw ConfigError("override " + key + ": empty seed range");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) seeds.push_back(parse_seed(key, trim(part)));
  if (seeds.empty()) throw ConfigError("override " + key + ": no seeds given");
  return seeds;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_double(key, trim(part)));
  return out;
}

std::string json_scalar_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();  // shortest round-trip form
  throw ConfigError("config value " + v.dump() + " is not a scalar");
}

std::string setting_tag(const std::string& setting) {
  std::string tag;
  for (char c : setting) tag.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                                               c == '-'
                                           ? c
                                           : '_');
  return tag;
}

std::string run_id_for(AgentKind agent, const std::string& setting, std::uint64_t seed) {
  std::string id = to_string(agent);
  if (setting != "base") id += "-" + setting_tag(setting);
  return id + "-s" + std::to_string(seed);
}

void fill_iotas(HyperParams& hp, double lb) {
  hp.iota2 = std::log(3.0 * lb / hp.gamma);
  hp.iota3 = std::log((1.0 + 16.0 * lb * lb * hp.iota2 / (hp.gamma * hp.gamma)) / hp.delta);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

BoundCheck make_check(std::string name, bool passed, bool applicable, double value, double limit,
                      std::string detail) {
  return BoundCheck{std::move(name), passed, applicable, value, limit, std::move(detail)};
}

}  // namespace

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kAppo:
      return "appo";
    case AgentKind::kOppo:
      return "oppo";
    case AgentKind::kRandomGate:
      return "random-gate";
    case AgentKind::kUniform:
      return "uniform";
  }
  return "unknown";
}

AgentKind agent_kind_from_string(const std::string& name) {
  if (name == "appo") return AgentKind::kAppo;
  if (name == "oppo") return AgentKind::kOppo;
  if (name == "random-gate") return AgentKind::kRandomGate;
  if (name == "uniform") return AgentKind::kUniform;
  throw ConfigError("unknown agent '" + name + "' (expected appo, oppo, random-gate or uniform)");
}

std::string to_string(HyperPreset preset) {
  return preset == HyperPreset::kTheory ? "theory" : "calibrated";
}

HyperPreset hyper_preset_from_string(const std::string& name) {
  if (name == "theory") return HyperPreset::kTheory;
  if (name == "calibrated") return HyperPreset::kCalibrated;
  throw ConfigError("unknown preset '" + name + "' (expected theory or calibrated)");
}

void apply_override(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  apply_override(c, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "agent") {
    c.agent = agent_kind_from_string(value);
  } else if (key == "d" || key == "dim") {
    c.instance.dim = parse_int(key, value);
  } else if (key == "contexts" || key == "num_contexts") {
    c.instance.num_contexts = parse_int(key, value);
  } else if (key == "actions" || key == "num_actions") {
    c.instance.num_actions = parse_int(key, value);
  } else if (key == "gap" || key == "Delta") {
    c.instance.min_gap = parse_double(key, value);
  } else if (key == "L" || key == "feature_bound") {
    c.instance.feature_bound = parse_double(key, value);
  } else if (key == "B" || key == "param_bound") {
    c.instance.param_bound = parse_double(key, value);
  } else if (key == "distinct_levels") {
    c.instance.distinct_levels = parse_bool(key, value);
  } else if (key == "link") {
    c.link = nlohmann::json{{"kind", value}};
  } else if (key == "instance") {
    c.instance_path = value;
  } else if (key == "instance_seed") {
    c.instance_seed = parse_seed(key, value);
  } else if (key == "T" || key == "horizon") {
    c.horizon = parse_long(key, value);
  } else if (key == "seeds") {
    c.seeds = parse_seed_list(key, value);
  } else if (key == "seed") {
    c.seeds = {parse_seed(key, value)};
  } else if (key == "delta") {
    c.delta = parse_double(key, value);
  } else if (key == "preset") {
    c.preset = hyper_preset_from_string(value);
  } else if (key == "calibrated_beta") {
    c.calibrated_beta = parse_double(key, value);
  } else if (key == "gamma_margin") {
    c.gamma_margin = parse_double(key, value);
  } else if (key == "eta_scale") {
    c.eta_scale = parse_double(key, value);
  } else if (key == "gamma" || key == "Gamma") {
    c.gamma = parse_double(key, value);
  } else if (key == "beta") {
    c.beta = parse_double(key, value);
  } else if (key == "eta") {
    c.eta = parse_double(key, value);
  } else if (key == "lambda") {
    c.lambda = parse_double(key, value);
  } else if (key == "truncation") {
    c.truncation = parse_double(key, value);
  } else if (key == "p" || key == "query_prob") {
    c.query_prob = parse_double(key, value);
  } else if (key == "budget") {
    c.budget = parse_long(key, value);
  } else if (key == "workers") {
    c.workers = parse_int(key, value);
  } else if (key == "out") {
    c.out_dir = value;
  } else if (key == "gamma_adpo") {
    c.adpo.gamma = parse_double(key, value);
  } else if (key == "lr" || key == "eta_lr") {
    c.adpo.learning_rate = parse_double(key, value);
  } else if (key == "beta_dpo") {
    c.adpo.beta_dpo = parse_double(key, value);
  } else if (key == "batch") {
    c.adpo.batch_size = parse_int(key, value);
  } else if (key == "epochs") {
    c.adpo.epochs = parse_int(key, value);
  } else if (key == "pseudo_labels") {
    c.adpo.pseudo_labels = parse_bool(key, value);
  } else if (key == "adpo_dim") {
    c.dataset.dim = parse_int(key, value);
  } else if (key == "adpo_contexts") {
    c.dataset.num_contexts = parse_int(key, value);
  } else if (key == "adpo_actions") {
    c.dataset.num_actions = parse_int(key, value);
  } else if (key == "train_items") {
    c.dataset.train_items = parse_int(key, value);
  } else if (key == "test_items") {
    c.dataset.test_items = parse_int(key, value);
  } else if (key == "signal") {
    c.dataset.signal = parse_double(key, value);
  } else if (key == "dataset") {
    c.dataset_path = value;
  } else if (key == "adpo_gamma_grid") {
    c.adpo_gamma_grid = parse_double_list(key, value);
  } else if (key == "adpo_tuning_seeds") {
    c.adpo_tuning_seeds = parse_seed_list(key, value);
  } else if (key == "adpo_tolerance") {
    c.adpo_tolerance = parse_double(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "link") {
      try {
        link_from_json(value);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("bad link: ") + e.what());
      }
      c.link = value;
    } else if (key == "sweep") {
      Sweep sweep;
      sweep.key = value.value("key", std::string{"gamma"});
      if (value.contains("preset")) {
        if (value.at("preset") != "gamma-grid") throw ConfigError("unknown sweep preset");
        sweep.key = "gamma";
        for (double g : gamma_grid(value.value("min", 1e-3), value.value("max", 0.5),
                                   value.value("count", 8))) {
          sweep.values.push_back(json_scalar_to_string(g));
        }
      } else {
        if (!value.contains("values") || !value.at("values").is_array()) {
          throw ConfigError("sweep needs a values array");
        }
        for (const auto& v : value.at("values")) sweep.values.push_back(json_scalar_to_string(v));
      }
      if (sweep.values.empty()) throw ConfigError("sweep has no values");
      c.sweep = std::move(sweep);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) {
        if (!joined.empty()) joined += ",";
        joined += json_scalar_to_string(v);
      }
      apply_override(c, key, joined);
    } else if (value.is_null()) {
      continue;
    } else {
      apply_override(c, key, json_scalar_to_string(value));
    }
  }
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json doc{{"agent", to_string(c.agent)},
                     {"d", c.instance.dim},
                     {"contexts", c.instance.num_contexts},
                     {"actions", c.instance.num_actions},
                     {"gap", c.instance.min_gap},
                     {"L", c.instance.feature_bound},
                     {"B", c.instance.param_bound},
                     {"distinct_levels", c.instance.distinct_levels},
                     {"link", c.link},
                     {"T", c.horizon},
                     {"seeds", c.seeds},
                     {"delta", c.delta},
                     {"preset", to_string(c.preset)},
                     {"calibrated_beta", c.calibrated_beta},
                     {"gamma_margin", c.gamma_margin},
                     {"eta_scale", c.eta_scale},
                     {"truncation", c.truncation},
                     {"workers", c.workers},
                     {"gamma_adpo", c.adpo.gamma},
                     {"lr", c.adpo.learning_rate},
                     {"beta_dpo", c.adpo.beta_dpo},
                     {"batch", c.adpo.batch_size},
                     {"epochs", c.adpo.epochs},
                     {"pseudo_labels", c.adpo.pseudo_labels},
                     {"adpo_dim", c.dataset.dim},
                     {"adpo_contexts", c.dataset.num_contexts},
                     {"adpo_actions", c.dataset.num_actions},
                     {"train_items", c.dataset.train_items},
                     {"test_items", c.dataset.test_items},
                     {"signal", c.dataset.signal}};
  if (c.instance_path) doc["instance"] = c.instance_path->string();
  if (c.instance_seed) doc["instance_seed"] = *c.instance_seed;
  if (c.gamma) doc["gamma"] = *c.gamma;
  if (c.beta) doc["beta"] = *c.beta;
  if (c.eta) doc["eta"] = *c.eta;
  if (c.lambda) doc["lambda"] = *c.lambda;
  if (c.query_prob) doc["p"] = *c.query_prob;
  if (c.budget) doc["budget"] = *c.budget;
  if (c.sweep) doc["sweep"] = {{"key", c.sweep->key}, {"values", c.sweep->values}};
  if (c.dataset_path) doc["dataset"] = c.dataset_path->string();
  if (!c.adpo_gamma_grid.empty()) {
    doc["adpo_gamma_grid"] = c.adpo_gamma_grid;
    doc["adpo_tuning_seeds"] = c.adpo_tuning_seeds;
    doc["adpo_tolerance"] = c.adpo_tolerance;
  }
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  if (c.horizon < 0) throw ConfigError("horizon must be nonnegative");
  if (c.seeds.empty()) throw ConfigError("at least one seed is required");
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!c.instance_path) {
    if (c.instance.dim < 1 || c.instance.num_contexts < 1 || c.instance.num_actions < 2) {
      throw ConfigError("instance needs d >= 1, contexts >= 1, actions >= 2");
    }
    if (!(c.instance.min_gap > 0.0)) throw ConfigError("gap must be positive");
    if (!(c.instance.feature_bound > 0.0) || !(c.instance.param_bound > 0.0)) {
      throw ConfigError("L and B must be positive");
    }
  }
  if (c.gamma && !(*c.gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (c.beta && !(*c.beta >= 0.0)) throw ConfigError("beta must be nonnegative");
  if (c.eta && !(*c.eta >= 0.0)) throw ConfigError("eta must be nonnegative");
  if (c.lambda && !(*c.lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(c.truncation > 0.0)) throw ConfigError("truncation must be positive");
  if (c.preset == HyperPreset::kCalibrated &&
      (!(c.calibrated_beta > 0.0) || !(c.gamma_margin > 0.0) || !(c.eta_scale >= 0.0))) {
    throw ConfigError("calibrated preset needs positive beta and margin, nonnegative eta scale");
  }
  if (c.agent == AgentKind::kRandomGate) {
    if (!c.query_prob && !c.budget) throw ConfigError("random-gate needs p or budget");
    if (c.query_prob && !(*c.query_prob >= 0.0 && *c.query_prob <= 1.0)) {
      throw ConfigError("p must lie in [0, 1]");
    }
    if (c.budget && *c.budget < 0) throw ConfigError("budget must be nonnegative");
  }
  if (!(c.adpo.gamma >= 0.0)) throw ConfigError("gamma_adpo must be nonnegative");
  if (c.adpo.batch_size < 1 || c.adpo.epochs < 0 || !(c.adpo.beta_dpo > 0.0)) {
    throw ConfigError("invalid ADPO batch, epochs or beta_dpo");
  }
  try {
    link_from_json(c.link);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad link: ") + e.what());
  }
}

std::vector<double> gamma_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) {
    throw ConfigError("gamma grid needs 0 < min <= max and count >= 1");
  }
  std::vector<double> grid;
  if (count == 1) return {lo};
  const double ratio = std::pow(hi / lo, 1.0 / (count - 1));
  double g = lo;
  for (int i = 0; i < count; ++i, g *= ratio) grid.push_back(i + 1 == count ? hi : g);
  return grid;
}

HyperParams resolve_hyperparams(const ExperimentConfig& c, const ProblemInstance& instance) {
  const int d = instance.dim();
  const int na = instance.num_actions();
  const double gap = instance.min_gap();
  const double l = instance.feature_bound();
  const double b = instance.param_bound();
  const double kappa = instance.link().kappa();
  const double lb = l * b;

  HyperParams hp;
  if (c.preset == HyperPreset::kTheory) {
    hp = derive_hyperparams(d, na, gap, l, b, c.delta, kappa);
  } else {
    hp.delta = c.delta;
    hp.lambda = 1.0 / (b * b);
    hp.beta = c.calibrated_beta;
    hp.gamma = std::min(c.gamma_margin * gap / (2.0 * hp.beta), 1.0);
    fill_iotas(hp, lb);
    hp.eta = c.eta_scale * theory_eta(d, na, hp.gamma, l, b);
  }

  if (c.beta && c.preset == HyperPreset::kCalibrated && !c.gamma) {
    hp.beta = *c.beta;
    hp.gamma = std::min(c.gamma_margin * gap / (2.0 * hp.beta), 1.0);
    fill_iotas(hp, lb);
    hp.eta = c.eta_scale * theory_eta(d, na, hp.gamma, l, b);
  }
  if (c.gamma) {
    hp.gamma = *c.gamma;
    fill_iotas(hp, lb);
    if (c.preset == HyperPreset::kTheory) {
      hp.beta = theory_beta(d, hp.gamma, l, b, c.delta, kappa);
      hp.eta = theory_eta(d, na, hp.gamma, l, b);
    } else {
      hp.eta = c.eta_scale * theory_eta(d, na, hp.gamma, l, b);
    }
  }
  if (c.beta) hp.beta = *c.beta;
  if (c.eta) hp.eta = *c.eta;
  if (c.lambda) hp.lambda = *c.lambda;
  return hp;
}

ProblemInstance make_instance(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.instance_path) return load_instance(*c.instance_path);
  RngStream rng(c.instance_seed.value_or(seed), 0);
  return generate_instance(c.instance, rng, link_from_json(c.link));
}

bool BoundReport::hard_violation() const {
  for (const auto& check : checks) {
    if (check.applicable && !check.passed && check.name != "concentration") return true;
  }
  return false;
}

const BoundCheck& BoundReport::get(const std::string& name) const {
  for (const auto& check : checks) {
    if (check.name == name) return check;
  }
  throw std::out_of_range("no check named " + name);
}

BoundReport check_bounds(const std::vector<TranscriptRow>& transcript,
                         const std::vector<AuditRow>& audit, const ProblemInstance& instance,
                         const HyperParams& params, AgentKind agent) {
  BoundReport report;
  const int d = instance.dim();
  const double l = instance.feature_bound();
  const double b = instance.param_bound();

  long queries = 0;
  double nonquery_regret = 0.0;
  QueryLedger replay(d, params.lambda);
  double potential = 0.0;
  for (const auto& row : transcript) {
    if (!row.queried) {
      nonquery_regret += row.regret;
      continue;
    }
    ++queries;
    const Eigen::VectorXd z = instance.features()(row.context, row.first) -
                              instance.features()(row.context, row.second);
    const double u = replay.uncertainty(z);
    potential += std::min(1.0, u * u);
    replay.append(z, 0);
  }

  const bool appo = agent == AgentKind::kAppo;
  const double qbound = query_bound(d, params.gamma, l, b);
  report.checks.push_back(make_check("query_bound", static_cast<double>(queries) <= qbound, appo,
                                     static_cast<double>(queries), qbound,
                                     "|C_T| <= 16 d Gamma^-2 log(3 L B / Gamma)"));

  const double n = static_cast<double>(queries);
  const double lam_d = params.lambda * d;
  const double pbound = 2.0 * d * std::log((lam_d + n * l * l) / lam_d);
  report.checks.push_back(make_check("elliptical_potential", potential <= pbound, true, potential,
                                     pbound, "sum min(1, ||z||^2_{Sigma^-1}) over queried rounds"));

  double max_norm = 0.0;
  long violations = 0;
  long checked = 0;
  for (const auto& row : audit) {
    max_norm = std::max(max_norm, row.concentration_norm);
    violations += row.optimism_violations;
    checked += row.optimism_checked;
  }
  const bool audited = !audit.empty() && audit.size() == transcript.size();
  report.concentration_held = audited && max_norm <= params.beta;
  report.checks.push_back(make_check("concentration", report.concentration_held, audited, max_norm,
                                     params.beta, "max_t ||theta_hat_t - theta*||_{Sigma_{t-1}}"));
  report.checks.push_back(make_check("zero_regret_off_query", nonquery_regret == 0.0,
                                     appo && report.concentration_held, nonquery_regret, 0.0,
                                     "regret on rounds without a query"));
  report.checks.push_back(make_check(
      "optimism", violations == 0, report.concentration_held, static_cast<double>(violations), 0.0,
      std::to_string(checked) + " (x, y) pairs checked"));
  return report;
}

nlohmann::json report_to_json(const BoundReport& report) {
  nlohmann::json checks = nlohmann::json::object();
  for (const auto& c : report.checks) {
    checks[c.name] = {{"passed", c.passed},
                      {"applicable", c.applicable},
                      {"value", c.value},
                      {"limit", c.limit},
                      {"detail", c.detail}};
  }
  return nlohmann::json{{"checks", std::move(checks)},
                        {"concentration_held", report.concentration_held},
                        {"hard_violation", report.hard_violation()}};
}

nlohmann::json hyperparams_to_json(const HyperParams& p) {
  return nlohmann::json{{"lambda", p.lambda}, {"beta", p.beta},   {"gamma", p.gamma},
                        {"eta", p.eta},       {"delta", p.delta}, {"iota1", p.iota1},
                        {"iota2", p.iota2},   {"iota3", p.iota3}, {"gamma_halvings", p.gamma_halvings}};
}

HyperParams hyperparams_from_json(const nlohmann::json& doc) {
  HyperParams p;
  p.lambda = doc.at("lambda").get<double>();
  p.beta = doc.at("beta").get<double>();
  p.gamma = doc.at("gamma").get<double>();
  p.eta = doc.at("eta").get<double>();
  p.delta = doc.at("delta").get<double>();
  p.iota1 = doc.value("iota1", 0.0);
  p.iota2 = doc.value("iota2", 0.0);
  p.iota3 = doc.value("iota3", 0.0);
  p.gamma_halvings = doc.value("gamma_halvings", 0);
  return p;
}

void write_transcript(const std::filesystem::path& path, const std::vector<TranscriptRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "%s\n", kTranscriptHeader);
  for (const auto& r : rows) {
    std::fprintf(f, "%s,%ld,%d,%d,%d,%d,%.17g,%.17g,%.17g,%ld\n", r.run_id.c_str(), r.t, r.context,
                 r.first, r.second, r.queried, r.uncertainty, r.regret, r.cumulative_regret,
                 r.cumulative_queries);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("error writing " + path.string());
}

std::vector<TranscriptRow> read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTranscriptHeader) {
    throw std::runtime_error(path.string() + ": missing or wrong transcript header");
  }
  std::vector<TranscriptRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 10) throw std::runtime_error(path.string() + ": malformed row");
    TranscriptRow r;
    r.run_id = cells[0];
    r.t = std::stol(cells[1]);
    r.context = std::stoi(cells[2]);
    r.first = std::stoi(cells[3]);
    r.second = std::stoi(cells[4]);
    r.queried = std::stoi(cells[5]);
    r.uncertainty = std::stod(cells[6]);
    r.regret = std::stod(cells[7]);
    r.cumulative_regret = std::stod(cells[8]);
    r.cumulative_queries = std::stol(cells[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_audit(const std::filesystem::path& path, const std::vector<AuditRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "%s\n", kAuditHeader);
  for (const auto& r : rows) {
    std::fprintf(f, "%ld,%.17g,%.17g,%d,%d\n", r.t, r.concentration_norm, r.appended_uncertainty,
                 r.optimism_checked, r.optimism_violations);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("error writing " + path.string());
}

std::vector<AuditRow> read_audit(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kAuditHeader) {
    throw std::runtime_error(path.string() + ": missing or wrong audit header");
  }
  std::vector<AuditRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw std::runtime_error(path.string() + ": malformed row");
    rows.push_back(AuditRow{std::stol(cells[0]), std::stod(cells[1]), std::stod(cells[2]),
                            std::stoi(cells[3]), std::stoi(cells[4])});
  }
  return rows;
}

RunRecord run_single(const ExperimentConfig& config, std::uint64_t seed, const std::string& setting) {
  RunRecord rec;
  rec.setting = setting;
  rec.seed = seed;
  rec.agent = config.agent;
  rec.horizon = config.horizon;
  rec.run_id = run_id_for(config.agent, setting, seed);

  const ProblemInstance instance = make_instance(config, seed);
  rec.params = resolve_hyperparams(config, instance);
  const auto& hp = rec.params;
  if (config.agent == AgentKind::kRandomGate) {
    rec.query_prob = config.budget ? budget_matched_probability(*config.budget, config.horizon)
                                   : config.query_prob.value_or(0.0);
  } else if (config.agent == AgentKind::kOppo) {
    rec.query_prob = 1.0;
  }

  RngStream rng(seed, 1);
  RunTally tally;
  tally.run_id = rec.run_id;
  std::vector<TranscriptRow> rows;
  std::vector<AuditRow> audit;
  rows.reserve(static_cast<std::size_t>(config.horizon));

  const long half = config.horizon / 2;
  const long tenth_start = config.horizon - config.horizon / 10;
  double regret_at_tenth = 0.0;

  if (config.agent == AgentKind::kUniform) {
    for (long t = 1; t <= config.horizon; ++t) {
      const int x = sample_context(instance, rng);
      rows.push_back(uniform_round(instance, x, rng, tally).row);
      if (t == tenth_start) regret_at_tenth = tally.cumulative_regret;
    }
  } else {
    AgentConfig agent_config;
    agent_config.params = hp;
    agent_config.truncation = config.truncation;
    agent_config.gate =
        config.agent == AgentKind::kAppo ? GateKind::kUncertainty
        : config.agent == AgentKind::kOppo ? GateKind::kAlways
                                           : GateKind::kRandom;
    agent_config.query_prob = rec.query_prob;
    AppoAgent agent(instance.features(), instance.link(), agent_config);
    audit.reserve(static_cast<std::size_t>(config.horizon));
    for (long t = 1; t <= config.horizon; ++t) {
      const int x = sample_context(instance, rng);
      AuditRow a;
      a.t = t;
      const Eigen::VectorXd err = agent.refresh_estimate() - instance.theta_star();
      a.concentration_norm = std::sqrt(std::max(0.0, err.dot(agent.ledger().covariance() * err)));

      RoundResult result;
      switch (config.agent) {
        case AgentKind::kAppo:
          result = run_round(agent, instance, x, rng, tally);
          break;
        case AgentKind::kOppo:
          result = oppo_round(agent, instance, x, rng, tally);
          break;
        default:
          result = random_gate_round(agent, instance, x, rec.query_prob, rng, tally);
          break;
      }
      const auto& dec = result.decision;
      a.appended_uncertainty = dec.appended_uncertainty;
      const double base = instance.reward(x, dec.second);
      for (int y = 0; y < instance.num_actions(); ++y) {
        const auto k = static_cast<std::size_t>(y);
        const double truth = instance.reward(x, y) - base;
        const double est = dec.gap_row[k];
        ++a.optimism_checked;
        if (est < truth - kOptimismTolerance ||
            est > truth + 2.0 * hp.beta * dec.uncertainty_row[k] + kOptimismTolerance) {
          ++a.optimism_violations;
        }
      }
      rows.push_back(std::move(result.row));
      audit.push_back(a);
      if (t == tenth_start) regret_at_tenth = tally.cumulative_regret;
    }
  }

  rec.final_regret = tally.cumulative_regret;
  rec.final_queries = tally.cumulative_queries;
  for (const auto& r : rows) {
    if (!r.queried) rec.nonquery_regret += r.regret;
    if (r.queried && r.t > half) ++rec.queries_second_half;
  }
  rec.regret_final_tenth = tally.cumulative_regret - regret_at_tenth;
  for (const auto& a : audit) {
    rec.max_concentration_ratio =
        std::max(rec.max_concentration_ratio, hp.beta > 0.0 ? a.concentration_norm / hp.beta
                                                            : std::numeric_limits<double>::infinity());
  }
  rec.report = check_bounds(rows, audit, instance, hp, config.agent);

  if (config.write_files) {
    const auto& dir = config.out_dir;
    try {
      write_transcript(dir / ("transcript_" + rec.run_id + ".csv"), rows);
      if (config.agent != AgentKind::kUniform) write_audit(dir / ("audit_" + rec.run_id + ".csv"), audit);
      save_instance(instance, dir / ("instance_" + rec.run_id + ".json"));
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
  }
  if (config.keep_rows) {
    rec.rows = std::move(rows);
    rec.audit = std::move(audit);
  }
  return rec;
}

std::vector<SettingAggregate> aggregate(const std::vector<RunRecord>& runs) {
  std::vector<SettingAggregate> out;
  auto find = [&](const std::string& s) -> SettingAggregate& {
    for (auto& a : out) {
      if (a.setting == s) return a;
    }
    out.push_back(SettingAggregate{s});
    return out.back();
  };
  for (const auto& r : runs) find(r.setting);
  for (auto& agg : out) {
    std::vector<double> regrets;
    std::vector<double> queries;
    for (const auto& r : runs) {
      if (r.setting != agg.setting) continue;
      ++agg.runs;
      if (!r.error.empty()) {
        ++agg.failed_runs;
        continue;
      }
      regrets.push_back(r.final_regret);
      queries.push_back(static_cast<double>(r.final_queries));
      if (r.report.concentration_held) ++agg.concentration_held;
      if (r.report.hard_violation()) ++agg.hard_violations;
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
      mean = sd = 0.0;
      if (v.empty()) return;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      if (v.size() < 2) return;
      for (double x : v) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
    };
    stats(regrets, agg.mean_regret, agg.std_regret);
    stats(queries, agg.mean_queries, agg.std_queries);
  }
  return out;
}

nlohmann::json run_to_json(const RunRecord& r) {
  nlohmann::json doc{{"run_id", r.run_id},
                     {"setting", r.setting},
                     {"seed", r.seed},
                     {"agent", to_string(r.agent)},
                     {"horizon", r.horizon},
                     {"hyperparams", hyperparams_to_json(r.params)},
                     {"query_prob", r.query_prob},
                     {"final_regret", r.final_regret},
                     {"final_queries", r.final_queries},
                     {"nonquery_regret", r.nonquery_regret},
                     {"queries_second_half", r.queries_second_half},
                     {"regret_final_tenth", r.regret_final_tenth},
                     {"max_concentration_ratio", r.max_concentration_ratio},
                     {"bounds", report_to_json(r.report)},
                     {"transcript", "transcript_" + r.run_id + ".csv"},
                     {"instance", "instance_" + r.run_id + ".json"}};
  if (r.agent != AgentKind::kUniform) doc["audit"] = "audit_" + r.run_id + ".csv";
  if (!r.error.empty()) doc["error"] = r.error;
  return doc;
}

nlohmann::json summary_to_json(const ExperimentSummary& summary, const ExperimentConfig& config) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : summary.runs) runs.push_back(run_to_json(r));
  nlohmann::json settings = nlohmann::json::array();
  for (const auto& a : summary.settings) {
    settings.push_back({{"setting", a.setting},
                        {"runs", a.runs},
                        {"failed_runs", a.failed_runs},
                        {"mean_regret", a.mean_regret},
                        {"std_regret", a.std_regret},
                        {"mean_queries", a.mean_queries},
                        {"std_queries", a.std_queries},
                        {"concentration_held", a.concentration_held},
                        {"hard_violations", a.hard_violations}});
  }
  return nlohmann::json{{"format", "appo-summary/1"},
                        {"config", config_to_json(config)},
                        {"runs", std::move(runs)},
                        {"settings", std::move(settings)}};
}

ExperimentSummary run_experiment(const ExperimentConfig& config) {
  validate(config);
  struct Job {
    ExperimentConfig config;
    std::string setting;
    std::uint64_t seed;
  };
  std::vector<ExperimentConfig> settings;
  std::vector<std::string> names;
  if (config.sweep) {
    for (const auto& v : config.sweep->values) {
      ExperimentConfig c = config;
      apply_override(c, config.sweep->key, v);
      validate(c);
      settings.push_back(std::move(c));
      names.push_back(config.sweep->key + "=" + v);
    }
  } else {
    settings.push_back(config);
    names.emplace_back("base");
  }
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    for (auto seed : config.seeds) jobs.push_back(Job{settings[i], names[i], seed});
  }
  if (config.write_files) std::filesystem::create_directories(config.out_dir);

  ExperimentSummary summary;
  summary.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        summary.runs[i] = run_single(jobs[i].config, jobs[i].seed, jobs[i].setting);
      } catch (const std::exception& e) {
        RunRecord failed;
        failed.setting = jobs[i].setting;
        failed.seed = jobs[i].seed;
        failed.agent = jobs[i].config.agent;
        failed.horizon = jobs[i].config.horizon;
        failed.run_id = run_id_for(failed.agent, failed.setting, failed.seed);
        failed.error = e.what();
        summary.runs[i] = std::move(failed);
      }
    }
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), jobs.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  summary.settings = aggregate(summary.runs);
  if (config.write_files) {
    std::ofstream out(config.out_dir / "summary.json");
    if (!out) throw std::runtime_error("cannot write summary.json in " + config.out_dir.string());
    out << summary_to_json(summary, config).dump(1) << '\n';
  }
  return summary;
}

std::vector<RunCheck> check_run_directory(const std::filesystem::path& dir) {
  std::ifstream in(dir / "summary.json");
  if (!in) throw std::runtime_error("no summary.json in " + dir.string());
  const auto doc = nlohmann::json::parse(in);
  std::vector<RunCheck> out;
  for (const auto& run : doc.at("runs")) {
    if (run.contains("error")) continue;
    RunCheck rc;
    rc.run_id = run.at("run_id").get<std::string>();
    const auto agent = agent_kind_from_string(run.at("agent").get<std::string>());
    const auto rows = read_transcript(dir / run.at("transcript").get<std::string>());
    std::vector<AuditRow> audit;
    if (run.contains("audit")) audit = read_audit(dir / run.at("audit").get<std::string>());
    const auto instance = load_instance(dir / run.at("instance").get<std::string>());
    rc.report = check_bounds(rows, audit, instance, hyperparams_from_json(run.at("hyperparams")), agent);
    out.push_back(std::move(rc));
  }
  return out;
}

PreferenceDataset make_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.dataset_path) return load_dataset(*config.dataset_path);
  RngStream rng(seed, 2);
  return generate_dataset(config.dataset, rng);
}

AdpoRun run_adpo_seed(const AdpoConfig& config, const PreferenceDataset& data, std::uint64_t seed) {
  AdpoRun run;
  PreferenceOracle oracle;
  run.adpo = run_adpo(config, data, oracle, seed);
  AdpoConfig full = config;
  full.gamma = 1e9;
  full.pseudo_labels = true;
  PreferenceOracle full_oracle;
  run.baseline = run_adpo(full, data, full_oracle, seed);
  return run;
}

double tune_adpo_gamma(const AdpoConfig& base, const DatasetSpec& spec,
                       const std::vector<double>& grid,
                       const std::vector<std::uint64_t>& tuning_seeds, double tolerance) {
  if (grid.empty()) return base.gamma;
  std::vector<PreferenceDataset> sets;
  for (auto s : tuning_seeds) {
    RngStream rng(s, 2);
    sets.push_back(generate_dataset(spec, rng));
  }
  double best_gamma = *std::max_element(grid.begin(), grid.end());
  double best_fraction = std::numeric_limits<double>::infinity();
  for (double g : grid) {
    AdpoConfig c = base;
    c.gamma = g;
    double fraction = 0.0;
    double drop = 0.0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const auto run = run_adpo_seed(c, sets[i], tuning_seeds[i]);
      fraction += static_cast<double>(run.adpo.queries) /
                  std::max<double>(1.0, static_cast<double>(run.baseline.queries));
      drop += run.baseline.accuracy - run.adpo.accuracy;
    }
    const double k = std::max<double>(1.0, static_cast<double>(sets.size()));
    if (drop / k <= tolerance && fraction / k < best_fraction) {
      best_fraction = fraction / k;
      best_gamma = g;
    }
  }
  return best_gamma;
}

}  // namespace appo
