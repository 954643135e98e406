#include "appo/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace appo {

std::string to_string(LinkKind kind) {
  switch (kind) {
    case LinkKind::kLogistic:
      return "logistic";
    case LinkKind::kCustomTable:
      return "custom-table";
  }
  return "unknown";
}

LinkKind link_kind_from_string(const std::string& name) {
  if (name == "logistic") return LinkKind::kLogistic;
  if (name == "custom-table") return LinkKind::kCustomTable;
  throw InstanceError("unknown link kind: " + name);
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double logistic_derivative(double z) {
  const double s = logistic(z);
  return s * (1.0 - s);
}

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double segment_slope(const std::vector<double>& knots, const std::vector<double>& values,
                     std::size_t i) {
  return (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
}

}  // namespace

LinkFunction LinkFunction::logistic() {
  LinkFunction link;
  link.kind_ = LinkKind::kLogistic;
  link.kappa_ = link.min_derivative(kGapRangeLow, kGapRangeHigh);
  return link;
}

LinkFunction LinkFunction::custom_table(std::vector<double> knots, std::vector<double> values) {
  if (knots.size() < 2 || knots.size() != values.size()) {
    throw InstanceError("custom link table needs at least two (knot, value) pairs");
  }
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (!std::isfinite(knots[i]) || !std::isfinite(values[i])) {
      throw InstanceError("custom link table entries must be finite");
    }
    if (values[i] < 0.0 || values[i] > 1.0) {
      throw InstanceError("custom link values must lie in [0, 1]");
    }
    if (i > 0 && (knots[i] <= knots[i - 1] || values[i] < values[i - 1])) {
      throw InstanceError("custom link table must have increasing knots and monotone values");
    }
  }
  LinkFunction link;
  link.kind_ = LinkKind::kCustomTable;
  link.knots_ = std::move(knots);
  link.values_ = std::move(values);
  link.kappa_ = link.min_derivative(kGapRangeLow, kGapRangeHigh);
  if (!(link.kappa_ > 0.0)) {
    throw InstanceError("custom link must have a positive slope on [-2, 2]");
  }
  return link;
}

double LinkFunction::operator()(double z) const {
  if (kind_ == LinkKind::kLogistic) return appo::logistic(z);
  if (z <= knots_.front()) return values_.front();
  if (z >= knots_.back()) return values_.back();
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), z);
  const auto i = static_cast<std::size_t>(it - knots_.begin()) - 1;
  return values_[i] + segment_slope(knots_, values_, i) * (z - knots_[i]);
}

double LinkFunction::derivative(double z) const {
  if (kind_ == LinkKind::kLogistic) return logistic_derivative(z);
  if (z < knots_.front() || z >= knots_.back()) return 0.0;
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), z);
  const auto i = static_cast<std::size_t>(it - knots_.begin()) - 1;
  return segment_slope(knots_, values_, i);
}

double LinkFunction::integral(double z) const {
  if (kind_ == LinkKind::kLogistic) return softplus(z);
  if (z <= knots_.front()) return values_.front() * (z - knots_.front());
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
    const double hi = std::min(z, knots_[i + 1]);
    const double w = hi - knots_[i];
    acc += values_[i] * w + 0.5 * segment_slope(knots_, values_, i) * w * w;
    if (z <= knots_[i + 1]) return acc;
  }
  return acc + values_.back() * (z - knots_.back());
}

double LinkFunction::min_derivative(double a, double b) const {
  if (!std::isfinite(a) || !std::isfinite(b) || a > b) {
    throw std::domain_error("min_derivative needs a finite range with a <= b");
  }
  if (kind_ == LinkKind::kLogistic) {
    // sigma' is even and decreasing in |z|.
    return logistic_derivative(std::max(std::abs(a), std::abs(b)));
  }
  if (a < knots_.front() || b > knots_.back()) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
    const bool touches = knots_[i + 1] >= a && knots_[i] <= b;
    if (touches) best = std::min(best, segment_slope(knots_, values_, i));
  }
  return best;
}

double link_eval(const LinkFunction& link, double z) {
  if (!std::isfinite(z)) throw std::domain_error("link_eval: argument must be finite");
  return link(z);
}

double kappa_for_range(const LinkFunction& link, double a, double b) {
  return link.min_derivative(a, b);
}

FeatureMap::FeatureMap(int dim, int num_contexts, int num_actions)
    : FeatureMap(num_contexts, num_actions,
                 Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(num_contexts) * num_actions)) {}

FeatureMap::FeatureMap(int num_contexts, int num_actions, Eigen::MatrixXd table)
    : num_contexts_(num_contexts), num_actions_(num_actions), table_(std::move(table)) {
  if (table_.rows() < 1 || num_contexts_ < 1 || num_actions_ < 1) {
    throw InstanceError("feature map needs d >= 1, |X| >= 1 and |A| >= 1");
  }
  if (table_.cols() != static_cast<Eigen::Index>(num_contexts_) * num_actions_) {
    throw InstanceError("feature table has the wrong number of columns");
  }
  if (!table_.allFinite()) throw InstanceError("feature table must be finite");
}

double FeatureMap::max_norm() const { return table_.colwise().norm().maxCoeff(); }

ProblemInstance::ProblemInstance(FeatureMap features, Eigen::VectorXd theta_star, LinkFunction link,
                                 std::vector<double> context_probs, double feature_bound,
                                 double param_bound)
    : features_(std::move(features)),
      theta_star_(std::move(theta_star)),
      link_(std::move(link)),
      context_probs_(std::move(context_probs)),
      feature_bound_(feature_bound),
      param_bound_(param_bound) {
  if (!(feature_bound_ > 0.0) || !(param_bound_ > 0.0)) {
    throw InstanceError("bounds L and B must be positive");
  }
  if (theta_star_.size() != features_.dim()) {
    throw InstanceError("theta* dimension does not match the feature map");
  }
  if (theta_star_.norm() > param_bound_ * (1.0 + 1e-12)) {
    throw InstanceError("||theta*|| exceeds B");
  }
  if (features_.max_norm() > 0.5 * feature_bound_ * (1.0 + 1e-12)) {
    throw InstanceError("a feature vector exceeds L/2 in norm");
  }
  if (context_probs_.size() != static_cast<std::size_t>(features_.num_contexts())) {
    throw InstanceError("context distribution has the wrong length");
  }
  double total = 0.0;
  for (double p : context_probs_) {
    if (!(p >= 0.0)) throw InstanceError("context probabilities must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InstanceError("context distribution must sum to 1");

  const int nx = features_.num_contexts();
  const int na = features_.num_actions();
  rewards_.resize(nx, na);
  optimal_rewards_.assign(static_cast<std::size_t>(nx), 0.0);
  min_gap_ = std::numeric_limits<double>::infinity();
  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < na; ++y) {
      const double r = theta_star_.dot(features_(x, y));
      if (r < -1e-12 || r > 1.0 + 1e-12) {
        throw InstanceError("reward outside [0, 1] at context " + std::to_string(x) + ", action " +
                            std::to_string(y));
      }
      rewards_(x, y) = r;
    }
    optimal_rewards_[static_cast<std::size_t>(x)] = rewards_.row(x).maxCoeff();
    for (int y = 0; y < na; ++y) {
      const double g = gap(x, y);
      if (g > kTieTolerance) min_gap_ = std::min(min_gap_, g);
    }
  }
  if (!std::isfinite(min_gap_)) {
    throw InstanceError("every action is optimal in every context; the minimal gap is undefined");
  }
}

}  // namespace appo
