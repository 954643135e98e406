#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "appo/adpo.hpp"
#include "appo/appo_agent.hpp"
#include "appo/environment.hpp"
#include "appo/model_core.hpp"

namespace appo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgentKind { kAppo, kOppo, kRandomGate, kUniform };

std::string to_string(AgentKind kind);
AgentKind agent_kind_from_string(const std::string& name);

/// How hyperparameters that are not overridden get filled in.
///  theory:     derive_hyperparams as is.
///  calibrated: beta = calibrated_beta, Gamma = gamma_margin * Delta / (2 beta),
///              eta = eta_scale * theory eta at that Gamma, lambda = B^-2.
enum class HyperPreset { kTheory, kCalibrated };

std::string to_string(HyperPreset preset);
HyperPreset hyper_preset_from_string(const std::string& name);

struct Sweep {
  std::string key;
  std::vector<std::string> values;
};

struct ExperimentConfig {
  AgentKind agent = AgentKind::kAppo;
  InstanceSpec instance;
  nlohmann::json link = {{"kind", "logistic"}};
  std::optional<std::filesystem::path> instance_path;
  std::optional<std::uint64_t> instance_seed;  // same instance for every run seed
  long horizon = 1000;
  std::vector<std::uint64_t> seeds{1};
  double delta = 0.05;

  HyperPreset preset = HyperPreset::kTheory;
  double calibrated_beta = 4.0;
  double gamma_margin = 0.95;
  double eta_scale = 10.0;
  std::optional<double> gamma;
  std::optional<double> beta;
  std::optional<double> eta;
  std::optional<double> lambda;
  double truncation = 1.0;

  std::optional<double> query_prob;  // random-gate p
  std::optional<long> budget;        // random-gate budget match: p = budget / T

  std::optional<Sweep> sweep;
  int workers = 1;
  std::filesystem::path out_dir;
  bool write_files = true;
  bool keep_rows = false;

  AdpoConfig adpo;
  DatasetSpec dataset;
  std::optional<std::filesystem::path> dataset_path;
  std::vector<double> adpo_gamma_grid;  // tuned before the run when non-empty
  std::vector<std::uint64_t> adpo_tuning_seeds{101, 102, 103, 104, 105};
  double adpo_tolerance = 0.01;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `key=value` override. Throws ConfigError on unknown keys or bad values.
void apply_override(ExperimentConfig& config, const std::string& assignment);
void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Throws ConfigError if the config cannot run.
void validate(const ExperimentConfig& config);

/// Geometric grid of Gamma values for the Delta-unknown preset.
std::vector<double> gamma_grid(double lo, double hi, int count);

/// Fills hyperparameters for `instance` from the preset, then applies overrides.
/// A Gamma override without beta/eta overrides re-derives those at the new Gamma.
HyperParams resolve_hyperparams(const ExperimentConfig& config, const ProblemInstance& instance);

ProblemInstance make_instance(const ExperimentConfig& config, std::uint64_t seed);

/// Per-round values the agent never sees, computed by the harness.
struct AuditRow {
  long t = 0;
  double concentration_norm = 0.0;  // ||theta_hat_t - theta*||_{Sigma_{t-1}}
  double appended_uncertainty = 0.0;
  int optimism_checked = 0;
  int optimism_violations = 0;
};

struct BoundCheck {
  std::string name;
  bool passed = true;
  bool applicable = true;
  double value = 0.0;
  double limit = 0.0;
  std::string detail;
};

struct BoundReport {
  std::vector<BoundCheck> checks;  // query_bound, elliptical_potential, concentration,
                                   // zero_regret_off_query, optimism
  bool concentration_held = false;
  /// True when a guaranteed check failed: (a), (b), or (d)/(e) given (c).
  bool hard_violation() const;
  const BoundCheck& get(const std::string& name) const;
};

/// Evaluates the five checks. (a), (b), (d) read the transcript and instance;
/// (c) and (e) read the audit rows.
/// The query bound and zero-regret-off-query checks only apply to the APPO agent.
BoundReport check_bounds(const std::vector<TranscriptRow>& transcript,
                         const std::vector<AuditRow>& audit, const ProblemInstance& instance,
                         const HyperParams& params, AgentKind agent = AgentKind::kAppo);

nlohmann::json report_to_json(const BoundReport& report);

struct RunRecord {
  std::string run_id;
  std::string setting;
  std::uint64_t seed = 0;
  AgentKind agent = AgentKind::kAppo;
  long horizon = 0;
  HyperParams params;
  double query_prob = 0.0;
  double final_regret = 0.0;
  long final_queries = 0;
  double nonquery_regret = 0.0;
  long queries_second_half = 0;
  double regret_final_tenth = 0.0;
  double max_concentration_ratio = 0.0;
  BoundReport report;
  std::string error;
  std::vector<TranscriptRow> rows;  // only with keep_rows
  std::vector<AuditRow> audit;      // only with keep_rows
};

/// One seeded run of the configured agent. Writes transcript_<id>.csv,
/// audit_<id>.csv and instance_<id>.json under out_dir when write_files is set.
RunRecord run_single(const ExperimentConfig& config, std::uint64_t seed,
                     const std::string& setting = "base");

struct SettingAggregate {
  std::string setting;
  int runs = 0;
  int failed_runs = 0;
  double mean_regret = 0.0;
  double std_regret = 0.0;
  double mean_queries = 0.0;
  double std_queries = 0.0;
  int concentration_held = 0;
  int hard_violations = 0;
};

struct ExperimentSummary {
  std::vector<RunRecord> runs;
  std::vector<SettingAggregate> settings;
};

/// Expands sweep settings x seeds, runs them on `workers` threads, and writes
/// summary.json. Per-run failures are recorded and do not stop the sweep.
ExperimentSummary run_experiment(const ExperimentConfig& config);

std::vector<SettingAggregate> aggregate(const std::vector<RunRecord>& runs);
nlohmann::json summary_to_json(const ExperimentSummary& summary, const ExperimentConfig& config);
nlohmann::json run_to_json(const RunRecord& run);
nlohmann::json hyperparams_to_json(const HyperParams& params);
HyperParams hyperparams_from_json(const nlohmann::json& doc);

inline constexpr const char* kTranscriptHeader =
    "run_id,t,context,y1,y2,queried,uncertainty,instantaneous_regret,cumulative_regret,"
    "cumulative_queries";
inline constexpr const char* kAuditHeader =
    "t,concentration_norm,appended_uncertainty,optimism_checked,optimism_violations";

void write_transcript(const std::filesystem::path& path, const std::vector<TranscriptRow>& rows);
std::vector<TranscriptRow> read_transcript(const std::filesystem::path& path);
void write_audit(const std::filesystem::path& path, const std::vector<AuditRow>& rows);
std::vector<AuditRow> read_audit(const std::filesystem::path& path);

struct RunCheck {
  std::string run_id;
  BoundReport report;
};

/// Re-checks every run listed in <dir>/summary.json from its files.
std::vector<RunCheck> check_run_directory(const std::filesystem::path& dir);

/// ADPO runs: one per seed. With a gamma grid, gamma is tuned on
/// `tuning_seeds` first (least queries whose accuracy stays within
/// `tolerance` of the full-query baseline).
struct AdpoRun {
  AdpoSummary adpo;
  AdpoSummary baseline;
};

double tune_adpo_gamma(const AdpoConfig& base, const DatasetSpec& spec,
                       const std::vector<double>& grid, const std::vector<std::uint64_t>& tuning_seeds,
                       double tolerance);
AdpoRun run_adpo_seed(const AdpoConfig& config, const PreferenceDataset& data, std::uint64_t seed);
PreferenceDataset make_dataset(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace appo
