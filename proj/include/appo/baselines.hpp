#pragma once

#include "appo/appo_agent.hpp"

namespace appo {

// Reference agents. All of them emit the same transcript schema as APPO.

/// Always-query OPPO: APPO mechanics with the gate forced open.
RoundResult oppo_round(AppoAgent& agent, const ProblemInstance& instance, int context,
                       RngStream& rng, RunTally& tally);

/// Queries with probability `query_prob` regardless of uncertainty.
RoundResult random_gate_round(AppoAgent& agent, const ProblemInstance& instance, int context,
                              double query_prob, RngStream& rng, RunTally& tally);

/// Plays y1 and y2 uniformly at random and never queries.
RoundResult uniform_round(const ProblemInstance& instance, int context, RngStream& rng,
                          RunTally& tally);

/// Query probability that spends `budget` queries in expectation over `horizon` rounds.
double budget_matched_probability(long budget, long horizon);

}  // namespace appo
