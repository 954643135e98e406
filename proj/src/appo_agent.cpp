#include "appo/appo_agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace appo {

double theory_beta(int dim, double gamma, double feature_bound, double param_bound, double delta,
                   double kappa) {
  const double lb = feature_bound * param_bound;
  const double iota2 = std::log(3.0 * lb / gamma);
  const double iota3 = std::log((1.0 + 16.0 * lb * lb * iota2 / (gamma * gamma)) / delta);
  return (1.0 + 4.0 * std::sqrt(dim * iota2) + std::sqrt(2.0 * dim * iota3)) / kappa;
}

double theory_eta(int dim, int num_actions, double gamma, double feature_bound, double param_bound) {
  const double lb = feature_bound * param_bound;
  return std::sqrt(gamma * gamma * std::log(static_cast<double>(num_actions)) /
                   (32.0 * dim * std::log(3.0 * lb / gamma)));
}

HyperParams derive_hyperparams(int dim, int num_actions, double min_gap, double feature_bound,
                               double param_bound, double delta, double kappa) {
  if (!(min_gap > 0.0)) throw std::invalid_argument("derive_hyperparams needs a positive gap");
  if (dim < 1 || num_actions < 1 || !(feature_bound > 0.0) || !(param_bound > 0.0) ||
      !(kappa > 0.0) || !(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("derive_hyperparams: invalid dimensions, bounds, delta or kappa");
  }
  HyperParams hp;
  hp.delta = delta;
  hp.lambda = 1.0 / (param_bound * param_bound);
  const double lb = feature_bound * param_bound;
  hp.iota1 = 42.0 * std::log(126.0 * lb * std::sqrt(static_cast<double>(dim)) / (min_gap * kappa)) +
             std::sqrt(8.0 * std::log(1.0 / delta));
  hp.gamma = std::min(kappa * min_gap / (2.0 * dim * hp.iota1), 1.0);
  for (;;) {
    hp.iota2 = std::log(3.0 * lb / hp.gamma);
    hp.iota3 = std::log((1.0 + 16.0 * lb * lb * hp.iota2 / (hp.gamma * hp.gamma)) / delta);
    hp.beta = theory_beta(dim, hp.gamma, feature_bound, param_bound, delta, kappa);
    hp.eta = theory_eta(dim, num_actions, hp.gamma, feature_bound, param_bound);
    if (2.0 * hp.beta * hp.gamma < min_gap) break;
    hp.gamma *= 0.5;
    ++hp.gamma_halvings;
  }
  return hp;
}

double query_bound(int dim, double gamma, double feature_bound, double param_bound) {
  return 16.0 * dim / (gamma * gamma) * std::log(3.0 * feature_bound * param_bound / gamma);
}

PolicyTable::PolicyTable(int num_contexts, int num_actions)
    : log_probs_(Eigen::MatrixXd::Constant(num_contexts, num_actions,
                                           -std::log(static_cast<double>(num_actions)))) {
  if (num_contexts < 1 || num_actions < 1) throw std::invalid_argument("empty policy table");
}

double PolicyTable::probability(int context, int action) const {
  return std::exp(log_probs_(context, action));
}

std::vector<double> PolicyTable::distribution(int context) const {
  std::vector<double> p(static_cast<std::size_t>(num_actions()));
  for (int y = 0; y < num_actions(); ++y) p[static_cast<std::size_t>(y)] = probability(context, y);
  return p;
}

int PolicyTable::sample(int context, RngStream& rng) const {
  const auto p = distribution(context);
  return rng.categorical(p);
}

void PolicyTable::update(int context, std::span<const double> gains, double eta) {
  if (gains.size() != static_cast<std::size_t>(num_actions())) {
    throw std::invalid_argument("policy update needs one gain per action");
  }
  if (eta == 0.0) return;
  auto row = log_probs_.row(context);
  for (int y = 0; y < num_actions(); ++y) row(y) += eta * gains[static_cast<std::size_t>(y)];
  const double top = row.maxCoeff();
  const double lse = top + std::log((row.array() - top).exp().sum());
  row.array() -= lse;
}

void policy_update(PolicyTable& policy, const std::function<double(int, int)>& gain, double eta) {
  std::vector<double> gains(static_cast<std::size_t>(policy.num_actions()));
  for (int x = 0; x < policy.num_contexts(); ++x) {
    for (int y = 0; y < policy.num_actions(); ++y) gains[static_cast<std::size_t>(y)] = gain(x, y);
    policy.update(x, gains, eta);
  }
}

std::string to_string(GateKind gate) {
  switch (gate) {
    case GateKind::kUncertainty:
      return "uncertainty";
    case GateKind::kAlways:
      return "always";
    case GateKind::kRandom:
      return "random";
    case GateKind::kNever:
      return "never";
  }
  return "unknown";
}

TranscriptRow RunTally::record(int context, const RoundDecision& decision, double regret) {
  ++rounds;
  cumulative_regret += regret;
  if (decision.queried) ++cumulative_queries;
  return TranscriptRow{run_id,
                       rounds,
                       context,
                       decision.first,
                       decision.second,
                       decision.queried ? 1 : 0,
                       decision.uncertainty,
                       regret,
                       cumulative_regret,
                       cumulative_queries};
}

int select_baseline(RngStream& rng, int num_actions) {
  if (num_actions < 1) throw std::invalid_argument("select_baseline needs at least one action");
  return rng.index(num_actions);
}

Candidate select_candidate(const Eigen::VectorXd& theta_hat, const QueryLedger& ledger, double beta,
                           const FeatureMap& features, int context, int baseline,
                           double truncation) {
  const int na = features.num_actions();
  Candidate out;
  out.gap_row.resize(static_cast<std::size_t>(na));
  out.uncertainty_row.resize(static_cast<std::size_t>(na));
  const Eigen::VectorXd base = features(context, baseline);
  double best = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < na; ++y) {
    const Eigen::VectorXd diff = features(context, y) - base;
    const double u = ledger.uncertainty(diff);
    const double g = std::min(theta_hat.dot(diff) + beta * u, truncation);
    out.gap_row[static_cast<std::size_t>(y)] = g;
    out.uncertainty_row[static_cast<std::size_t>(y)] = u;
    if (g > best) {
      best = g;
      out.action = y;
    }
  }
  return out;
}

AppoAgent::AppoAgent(FeatureMap features, LinkFunction link, AgentConfig config)
    : features_(std::move(features)),
      link_(std::move(link)),
      config_(config),
      ledger_(features_.dim(), config.params.lambda),
      policy_(features_.num_contexts(), features_.num_actions()),
      theta_hat_(Eigen::VectorXd::Zero(features_.dim())) {
  if (config_.gate == GateKind::kRandom && !(config_.query_prob >= 0.0 && config_.query_prob <= 1.0)) {
    throw std::invalid_argument("query probability must lie in [0, 1]");
  }
}

const Eigen::VectorXd& AppoAgent::refresh_estimate() {
  if (ledger_.version() != solved_version_) {
    theta_hat_ = solve_mle(ledger_, link_, theta_hat_).theta;
    solved_version_ = ledger_.version();
    ++mle_solves_;
  }
  return theta_hat_;
}

bool AppoAgent::decide_query(GateKind gate, double query_prob, double uncertainty,
                             RngStream& rng) const {
  switch (gate) {
    case GateKind::kUncertainty:
      return uncertainty > config_.params.gamma;
    case GateKind::kAlways:
      return true;
    case GateKind::kNever:
      return false;
    case GateKind::kRandom:
      if (query_prob >= 1.0) return true;
      if (query_prob <= 0.0) return false;
      return rng.bernoulli(query_prob);
  }
  return false;
}

RoundDecision AppoAgent::play(const ProblemInstance& instance, int context, RngStream& rng,
                              long round) {
  return play_gated(instance, context, rng, round, config_.gate, config_.query_prob);
}

RoundDecision AppoAgent::play_gated(const ProblemInstance& instance, int context, RngStream& rng,
                                    long round, GateKind gate, double query_prob) {
  refresh_estimate();
  const auto& hp = config_.params;
  RoundDecision decision;
  decision.second = select_baseline(rng, features_.num_actions());
  auto candidate = select_candidate(theta_hat_, ledger_, hp.beta, features_, context,
                                    decision.second, config_.truncation);
  decision.candidate = candidate.action;
  decision.first = candidate.action;
  decision.uncertainty = candidate.uncertainty_row[static_cast<std::size_t>(candidate.action)];
  decision.gap_row = std::move(candidate.gap_row);
  decision.uncertainty_row = std::move(candidate.uncertainty_row);
  decision.queried = decide_query(gate, query_prob, decision.uncertainty, rng);
  if (!decision.queried) return decision;

  decision.first = policy_.sample(context, rng);
  const auto outcome = sample_preference(instance, context, decision.first, decision.second, rng, round);
  decision.preference = outcome.preference;
  const Eigen::VectorXd z = features_(context, decision.first) - features_(context, decision.second);
  decision.appended_uncertainty = decision.uncertainty_row[static_cast<std::size_t>(decision.first)];

  // The exponential step uses D_hat_t, i.e. Sigma_{t-1}, so it runs before the append.
  if (hp.eta != 0.0) {
    const int baseline = decision.second;
    std::vector<double> gains(static_cast<std::size_t>(features_.num_actions()));
    for (int x = 0; x < features_.num_contexts(); ++x) {
      const Eigen::VectorXd base = features_(x, baseline);
      for (int y = 0; y < features_.num_actions(); ++y) {
        gains[static_cast<std::size_t>(y)] =
            optimistic_gap(theta_hat_, ledger_, hp.beta, features_(x, y), base, config_.truncation);
      }
      policy_.update(x, gains, hp.eta);
    }
  }
  ledger_.append(z, outcome.preference);
  return decision;
}

RoundResult run_round(AppoAgent& agent, const ProblemInstance& instance, int context,
                      RngStream& rng, RunTally& tally) {
  RoundResult result;
  result.decision = agent.play(instance, context, rng, tally.rounds + 1);
  const double regret = instantaneous_regret(instance, context, result.decision.first);
  result.row = tally.record(context, result.decision, regret);
  return result;
}

}  // namespace appo
