#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "appo/model_core.hpp"

namespace appo {

/// Deterministic random stream keyed by (seed, stream id).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on {0, ..., n - 1}.
  int index(int n);
  bool bernoulli(double p);
  double normal();
  /// Draw from a probability vector. Entries with zero mass are never returned.
  int categorical(std::span<const double> probs);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

/// One observed duel. `preference` is 1 when y1 won.
struct DuelOutcome {
  long round = 0;
  int context = 0;
  int first = 0;
  int second = 0;
  int preference = 0;
};

struct InstanceSpec {
  int dim = 5;
  int num_contexts = 20;
  int num_actions = 10;
  double min_gap = 0.3;
  double feature_bound = 2.0;
  double param_bound = 1.0;
  /// Require every pair of reward levels inside a context to differ by at
  /// least min_gap, not only the gaps to the optimum.
  bool distinct_levels = false;
};

/// Raised when no instance with the requested gap fits the reward range.
class ConstructionError : public InstanceError {
 public:
  using InstanceError::InstanceError;
};

/// Builds a random instance whose minimal nonzero gap equals spec.min_gap.
///
/// Rewards are laid out per context first (a unique optimum, one action at
/// gap exactly min_gap, the rest at larger gaps) and features are then placed
/// on the level sets of theta*: phi = (r / B^2) theta* + w with w orthogonal to
/// theta*, sized to respect ||phi|| <= L/2.
ProblemInstance generate_instance(const InstanceSpec& spec, RngStream& rng,
                                  const LinkFunction& link = LinkFunction::logistic());

int sample_context(const ProblemInstance& instance, RngStream& rng);

/// Bernoulli preference with P(o = 1) = sigma(r(x, y1) - r(x, y2)).
DuelOutcome sample_preference(const ProblemInstance& instance, int context, int first, int second,
                              RngStream& rng, long round = 0);

/// r*(x) - r(x, y).
double instantaneous_regret(const ProblemInstance& instance, int context, int action);

}  // namespace appo
