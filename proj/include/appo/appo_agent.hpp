#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "appo/environment.hpp"
#include "appo/estimator.hpp"
#include "appo/model_core.hpp"

namespace appo {

/// Worst-case hyperparameters.
///
/// lambda = B^-2, Gamma = kappa Delta / (2 d iota1) clamped to (0, 1], beta and
/// eta from iota2, iota3. Gamma is halved (re-deriving iota2, iota3, beta, eta)
/// until 2 beta Gamma < Delta; the number of halvings is recorded.
HyperParams derive_hyperparams(int dim, int num_actions, double min_gap, double feature_bound,
                               double param_bound, double delta, double kappa);

/// kappa^-1 (1 + 4 sqrt(d iota2) + sqrt(2 d iota3)) at the given Gamma.
double theory_beta(int dim, double gamma, double feature_bound, double param_bound, double delta,
                   double kappa);

/// sqrt(Gamma^2 log|A| / (32 d log(3 L B / Gamma))).
double theory_eta(int dim, int num_actions, double gamma, double feature_bound, double param_bound);

/// 16 d Gamma^-2 log(3 L B / Gamma): the cap on |C_T| when lambda = B^-2.
double query_bound(int dim, double gamma, double feature_bound, double param_bound);

/// Exponential-weights policy pi(y | x), stored as normalized log-probabilities.
class PolicyTable {
 public:
  PolicyTable(int num_contexts, int num_actions);

  int num_contexts() const { return static_cast<int>(log_probs_.rows()); }
  int num_actions() const { return static_cast<int>(log_probs_.cols()); }

  double probability(int context, int action) const;
  std::vector<double> distribution(int context) const;
  int sample(int context, RngStream& rng) const;
  const Eigen::MatrixXd& log_probs() const { return log_probs_; }

  /// pi(.|x) <- pi(.|x) exp(eta g) / Z for one context, via log-sum-exp.
  void update(int context, std::span<const double> gains, double eta);

 private:
  Eigen::MatrixXd log_probs_;
};

/// Applies the exponential update to every context with gains from `gain(x, y)`.
void policy_update(PolicyTable& policy, const std::function<double(int, int)>& gain, double eta);

enum class GateKind {
  kUncertainty,  // APPO: query iff ||phi1 - phi2||_{Sigma^-1} > Gamma
  kAlways,       // OPPO
  kRandom,       // query with fixed probability
  kNever,
};

std::string to_string(GateKind gate);

struct AgentConfig {
  HyperParams params;
  double truncation = 1.0;
  GateKind gate = GateKind::kUncertainty;
  double query_prob = 0.0;
};

struct RoundDecision {
  int first = 0;      // y1 actually played
  int second = 0;     // baseline y2
  int candidate = 0;  // argmax of the optimistic gap, before any resampling
  bool queried = false;
  double uncertainty = 0.0;           // gate value for (candidate, y2)
  double appended_uncertainty = 0.0;  // ||z||_{Sigma_{t-1}^-1} of the appended duel
  int preference = -1;                // observed o on query rounds
  std::vector<double> gap_row;        // optimistic gap of every action vs y2
  std::vector<double> uncertainty_row;
};

struct TranscriptRow {
  std::string run_id;
  long t = 0;
  int context = 0;
  int first = 0;
  int second = 0;
  int queried = 0;
  double uncertainty = 0.0;
  double regret = 0.0;
  double cumulative_regret = 0.0;
  long cumulative_queries = 0;
};

/// Running prefix sums for one run's transcript.
struct RunTally {
  std::string run_id;
  long rounds = 0;
  double cumulative_regret = 0.0;
  long cumulative_queries = 0;

  TranscriptRow record(int context, const RoundDecision& decision, double regret);
};

int select_baseline(RngStream& rng, int num_actions);

struct Candidate {
  int action = 0;
  std::vector<double> gap_row;
  std::vector<double> uncertainty_row;
};

/// argmax_y of the optimistic gap against the baseline; ties go to the lowest index.
Candidate select_candidate(const Eigen::VectorXd& theta_hat, const QueryLedger& ledger, double beta,
                           const FeatureMap& features, int context, int baseline,
                           double truncation = 1.0);

/// Algorithm state for APPO and its gated variants. The agent sees the
/// feature map and link, never theta*.
class AppoAgent {
 public:
  AppoAgent(FeatureMap features, LinkFunction link, AgentConfig config);

  const AgentConfig& config() const { return config_; }
  const QueryLedger& ledger() const { return ledger_; }
  const PolicyTable& policy() const { return policy_; }
  const FeatureMap& features() const { return features_; }
  const LinkFunction& link() const { return link_; }

  /// Solves the MLE if the ledger changed since the last solve; returns theta_hat_t.
  const Eigen::VectorXd& refresh_estimate();
  const Eigen::VectorXd& theta_hat() const { return theta_hat_; }
  int mle_solves() const { return mle_solves_; }

  /// One round of the protocol in context x. Feedback is drawn from `instance`.
  RoundDecision play(const ProblemInstance& instance, int context, RngStream& rng, long round);
  /// Same round mechanics with the query gate replaced by `gate`.
  RoundDecision play_gated(const ProblemInstance& instance, int context, RngStream& rng, long round,
                           GateKind gate, double query_prob = 0.0);

 private:
  bool decide_query(GateKind gate, double query_prob, double uncertainty, RngStream& rng) const;

  FeatureMap features_;
  LinkFunction link_;
  AgentConfig config_;
  QueryLedger ledger_;
  PolicyTable policy_;
  Eigen::VectorXd theta_hat_;
  std::uint64_t solved_version_ = 0;
  int mle_solves_ = 0;
};

struct RoundResult {
  RoundDecision decision;
  TranscriptRow row;
};

/// One APPO round: decide, maybe query, charge regret on the played y1.
RoundResult run_round(AppoAgent& agent, const ProblemInstance& instance, int context,
                      RngStream& rng, RunTally& tally);

}  // namespace appo
