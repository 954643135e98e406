#include "appo/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace appo {

namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream_id) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(stream_id),
                       static_cast<std::uint32_t>(stream_id >> 32), 0x61707030u};
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  auto seq = make_seed_seq(seed, stream_id);
  return std::mt19937_64(seq);
}

constexpr int kMaxConstructionAttempts = 16;

// Reward levels for one context, optimum first in the returned order before shuffling.
std::vector<double> draw_levels(const InstanceSpec& spec, double max_reward, RngStream& rng) {
  const int na = spec.num_actions;
  const double gap = spec.min_gap;
  std::vector<double> levels(static_cast<std::size_t>(na));
  if (spec.distinct_levels) {
    const double span = (na - 1) * gap;
    const double top = span + rng.uniform() * (max_reward - span);
    // Spread the slack above the minimal spacing over the lower steps.
    std::vector<double> cuts(static_cast<std::size_t>(na - 1));
    for (auto& c : cuts) c = rng.uniform();
    std::sort(cuts.begin(), cuts.end());
    const double slack = top - span;
    levels[0] = top;
    for (int k = 1; k < na; ++k) {
      const double extra = k >= 2 ? slack * cuts[static_cast<std::size_t>(k - 2)] : 0.0;
      levels[static_cast<std::size_t>(k)] = top - k * gap - extra;
    }
    return levels;
  }
  const double top = gap + (0.5 + 0.5 * rng.uniform()) * (max_reward - gap);
  levels[0] = top;
  levels[1] = top - gap;
  for (int k = 2; k < na; ++k) {
    levels[static_cast<std::size_t>(k)] = top - gap - rng.uniform() * (top - gap);
  }
  return levels;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

double RngStream::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

int RngStream::index(int n) {
  if (n <= 1) return 0;
  return std::uniform_int_distribution<int>(0, n - 1)(engine_);
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

double RngStream::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

int RngStream::categorical(std::span<const double> probs) {
  const double u = uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return last_positive;
  }
  return last_positive;
}

ProblemInstance generate_instance(const InstanceSpec& spec, RngStream& rng, const LinkFunction& link) {
  if (spec.dim < 1 || spec.num_contexts < 1 || spec.num_actions < 2) {
    throw std::invalid_argument("generate_instance needs d >= 1, |X| >= 1 and |A| >= 2");
  }
  if (!(spec.min_gap > 0.0)) throw std::invalid_argument("generate_instance needs a positive gap");
  if (!(spec.feature_bound > 0.0) || !(spec.param_bound > 0.0)) {
    throw std::invalid_argument("generate_instance needs positive bounds L and B");
  }
  // theta* has norm B and ||phi|| <= L/2, so rewards cannot exceed L B / 2.
  const double max_reward = std::min(1.0, 0.5 * spec.feature_bound * spec.param_bound);
  const double needed = spec.distinct_levels ? (spec.num_actions - 1) * spec.min_gap : spec.min_gap;
  if (spec.min_gap > 0.5 || needed > max_reward) {
    throw ConstructionError("no reward layout in [0, " + std::to_string(max_reward) +
                            "] realizes gap " + std::to_string(spec.min_gap));
  }

  const int d = spec.dim;
  const double b = spec.param_bound;
  const double half_l = 0.5 * spec.feature_bound;
  for (int attempt = 0; attempt < kMaxConstructionAttempts; ++attempt) {
    Eigen::VectorXd direction(d);
    for (int i = 0; i < d; ++i) direction(i) = rng.normal();
    if (direction.norm() < 1e-6) continue;
    direction.normalize();
    const Eigen::VectorXd theta = b * direction;

    FeatureMap features(d, spec.num_contexts, spec.num_actions);
    for (int x = 0; x < spec.num_contexts; ++x) {
      auto levels = draw_levels(spec, max_reward, rng);
      std::vector<int> order(static_cast<std::size_t>(spec.num_actions));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng.engine());
      for (int k = 0; k < spec.num_actions; ++k) {
        const double r = std::max(0.0, levels[static_cast<std::size_t>(k)]);
        Eigen::VectorXd phi = (r / (b * b)) * theta;
        const double radial = r / b;
        const double room = std::sqrt(std::max(0.0, half_l * half_l - radial * radial));
        if (d > 1 && room > 0.0) {
          Eigen::VectorXd w(d);
          for (int i = 0; i < d; ++i) w(i) = rng.normal();
          w -= w.dot(direction) * direction;
          const double wn = w.norm();
          if (wn > 1e-9) phi += (rng.uniform() * room / wn) * w;
        }
        features(x, order[static_cast<std::size_t>(k)]) = phi;
      }
    }
    std::vector<double> probs(static_cast<std::size_t>(spec.num_contexts),
                              1.0 / spec.num_contexts);
    // Uniform weights may sum to 1 +- ulp; renormalize the last entry.
    probs.back() = 1.0 - std::accumulate(probs.begin(), probs.end() - 1, 0.0);
    try {
      ProblemInstance instance(std::move(features), theta, link, std::move(probs),
                               spec.feature_bound, spec.param_bound);
      if (std::abs(instance.min_gap() - spec.min_gap) <= 1e-9) return instance;
    } catch (const InstanceError&) {
      // Rounding pushed a reward or norm over its bound; draw again.
    }
  }
  throw ConstructionError("could not realize the requested instance within the retry budget");
}

int sample_context(const ProblemInstance& instance, RngStream& rng) {
  if (instance.num_contexts() == 1) return 0;
  return rng.categorical(instance.context_probs());
}

DuelOutcome sample_preference(const ProblemInstance& instance, int context, int first, int second,
                              RngStream& rng, long round) {
  const double p =
      instance.link()(instance.reward(context, first) - instance.reward(context, second));
  return DuelOutcome{round, context, first, second, rng.bernoulli(p) ? 1 : 0};
}

double instantaneous_regret(const ProblemInstance& instance, int context, int action) {
  return instance.gap(context, action);
}

}  // namespace appo
