#include "appo/baselines.hpp"

#include <algorithm>

namespace appo {

namespace {

RoundResult finish(const ProblemInstance& instance, int context, RoundDecision decision,
                   RunTally& tally) {
  RoundResult result;
  const double regret = instantaneous_regret(instance, context, decision.first);
  result.row = tally.record(context, decision, regret);
  result.decision = std::move(decision);
  return result;
}

}  // namespace

RoundResult oppo_round(AppoAgent& agent, const ProblemInstance& instance, int context,
                       RngStream& rng, RunTally& tally) {
  auto decision = agent.play_gated(instance, context, rng, tally.rounds + 1, GateKind::kAlways);
  return finish(instance, context, std::move(decision), tally);
}

RoundResult random_gate_round(AppoAgent& agent, const ProblemInstance& instance, int context,
                              double query_prob, RngStream& rng, RunTally& tally) {
  auto decision =
      agent.play_gated(instance, context, rng, tally.rounds + 1, GateKind::kRandom, query_prob);
  return finish(instance, context, std::move(decision), tally);
}

RoundResult uniform_round(const ProblemInstance& instance, int context, RngStream& rng,
                          RunTally& tally) {
  RoundDecision decision;
  decision.first = rng.index(instance.num_actions());
  decision.second = rng.index(instance.num_actions());
  decision.candidate = decision.first;
  return finish(instance, context, std::move(decision), tally);
}

double budget_matched_probability(long budget, long horizon) {
  if (horizon <= 0) return 0.0;
  return std::clamp(static_cast<double>(budget) / static_cast<double>(horizon), 0.0, 1.0);
}

}  // namespace appo
