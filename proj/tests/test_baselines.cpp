#include <cmath>

#include <gtest/gtest.h>

#include "appo/baselines.hpp"

using namespace appo;

namespace {

ProblemInstance make(std::uint64_t seed, InstanceSpec spec) {
  RngStream rng(seed, 0);
  return generate_instance(spec, rng);
}

HyperParams practical(double gap, double beta) {
  HyperParams hp;
  hp.beta = beta;
  hp.gamma = 0.95 * gap / (2.0 * beta);
  hp.eta = 0.05;
  return hp;
}

}  // namespace

TEST(Oppo, QueriesEveryRound) {
  const auto inst = make(1, InstanceSpec{2, 3, 4, 0.3, 2.0, 1.0, false});
  AppoAgent agent(inst.features(), inst.link(), AgentConfig{practical(0.3, 2.0)});
  RngStream rng(1, 1);
  RunTally tally;
  for (int t = 1; t <= 500; ++t) {
    const auto r = oppo_round(agent, inst, sample_context(inst, rng), rng, tally);
    EXPECT_TRUE(r.decision.queried);
    EXPECT_EQ(r.row.cumulative_queries, t);
  }
}

TEST(Oppo, MatchesAppoWithGammaZero) {
  const auto inst = make(4, InstanceSpec{2, 3, 4, 0.3, 2.0, 1.0, false});
  HyperParams hp = practical(0.3, 50.0);
  hp.gamma = 0.0;
  AppoAgent appo(inst.features(), inst.link(), AgentConfig{hp});
  AppoAgent oppo(inst.features(), inst.link(), AgentConfig{hp});
  RngStream ra(4, 1), rb(4, 1);
  RunTally ta, tb;
  for (int t = 0; t < 300; ++t) {
    const auto a = run_round(appo, inst, sample_context(inst, ra), ra, ta);
    const auto b = oppo_round(oppo, inst, sample_context(inst, rb), rb, tb);
    ASSERT_EQ(a.row.context, b.row.context);
    ASSERT_EQ(a.row.first, b.row.first);
    ASSERT_EQ(a.row.second, b.row.second);
    ASSERT_EQ(a.row.queried, b.row.queried);
    ASSERT_EQ(a.row.cumulative_regret, b.row.cumulative_regret);
  }
}

TEST(Oppo, RegretIsSublinear) {
  double early = 0.0, late = 0.0;
  const int seeds = 20;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const auto inst = make(seed, InstanceSpec{2, 2, 3, 0.3, 2.0, 1.0, false});
    HyperParams hp = practical(0.3, 2.0);
    hp.eta = 10.0 * theory_eta(2, 3, hp.gamma, 2.0, 1.0);
    AppoAgent agent(inst.features(), inst.link(), AgentConfig{hp});
    RngStream rng(seed, 1);
    RunTally tally;
    for (int t = 1; t <= 50000; ++t) {
      oppo_round(agent, inst, sample_context(inst, rng), rng, tally);
      if (t == 5000) early += tally.cumulative_regret / 5000.0;
    }
    late += tally.cumulative_regret / 50000.0;
  }
  EXPECT_LE(late / seeds, 0.5 * early / seeds);
}

TEST(RandomGate, ZeroProbabilityNeverQueries) {
  const auto inst = make(2, InstanceSpec{2, 3, 4, 0.3, 2.0, 1.0, false});
  AppoAgent agent(inst.features(), inst.link(), AgentConfig{practical(0.3, 2.0)});
  const Eigen::MatrixXd initial = agent.policy().log_probs();
  RngStream rng(2, 1);
  RunTally tally;
  for (int t = 0; t < 1000; ++t) random_gate_round(agent, inst, sample_context(inst, rng), 0.0, rng, tally);
  EXPECT_EQ(tally.cumulative_queries, 0);
  EXPECT_EQ(agent.policy().log_probs(), initial);
}

TEST(RandomGate, UnitProbabilityMatchesOppo) {
  const auto inst = make(3, InstanceSpec{2, 3, 4, 0.3, 2.0, 1.0, false});
  AppoAgent a(inst.features(), inst.link(), AgentConfig{practical(0.3, 2.0)});
  AppoAgent b(inst.features(), inst.link(), AgentConfig{practical(0.3, 2.0)});
  RngStream ra(3, 1), rb(3, 1);
  RunTally ta, tb;
  for (int t = 0; t < 500; ++t) {
    const auto x = random_gate_round(a, inst, sample_context(inst, ra), 1.0, ra, ta);
    const auto y = oppo_round(b, inst, sample_context(inst, rb), rb, tb);
    ASSERT_EQ(x.row.first, y.row.first);
    ASSERT_EQ(x.row.second, y.row.second);
    ASSERT_EQ(x.row.queried, y.row.queried);
  }
}

TEST(RandomGate, QueryRateMatchesProbability) {
  const auto inst = make(5, InstanceSpec{2, 3, 4, 0.3, 2.0, 1.0, false});
  AppoAgent agent(inst.features(), inst.link(), AgentConfig{practical(0.3, 2.0)});
  RngStream rng(5, 1);
  RunTally tally;
  for (int t = 0; t < 10000; ++t) random_gate_round(agent, inst, sample_context(inst, rng), 0.25, rng, tally);
  EXPECT_NEAR(static_cast<double>(tally.cumulative_queries), 2500.0, 150.0);
}

TEST(RandomGate, BudgetMatchedProbability) {
  EXPECT_DOUBLE_EQ(budget_matched_probability(2500, 10000), 0.25);
  EXPECT_DOUBLE_EQ(budget_matched_probability(20000, 10000), 1.0);
  EXPECT_DOUBLE_EQ(budget_matched_probability(10, 0), 0.0);
}

TEST(Uniform, NeverQueriesAndAveragesTheGapTable) {
  const auto inst = make(6, InstanceSpec{3, 5, 6, 0.2, 2.0, 1.0, false});
  double mean_gap = 0.0;
  for (int x = 0; x < inst.num_contexts(); ++x) {
    for (int y = 0; y < inst.num_actions(); ++y) {
      mean_gap += inst.context_probs()[static_cast<std::size_t>(x)] * inst.gap(x, y) / inst.num_actions();
    }
  }
  RngStream rng(6, 1);
  RunTally tally;
  const int n = 400000;
  for (int t = 0; t < n; ++t) {
    const auto r = uniform_round(inst, sample_context(inst, rng), rng, tally);
    ASSERT_FALSE(r.decision.queried);
  }
  EXPECT_EQ(tally.cumulative_queries, 0);
  EXPECT_NEAR(tally.cumulative_regret / n, mean_gap, 0.003);
}

TEST(Uniform, RegretGrowsLinearly) {
  double at_t = 0.0, at_2t = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = make(seed, InstanceSpec{3, 5, 6, 0.2, 2.0, 1.0, false});
    RngStream rng(seed, 1);
    RunTally tally;
    for (int t = 1; t <= 4000; ++t) {
      uniform_round(inst, sample_context(inst, rng), rng, tally);
      if (t == 2000) at_t += tally.cumulative_regret;
    }
    at_2t += tally.cumulative_regret;
  }
  const double ratio = at_2t / at_t;
  EXPECT_GE(ratio, 1.8);
  EXPECT_LE(ratio, 2.2);
}
