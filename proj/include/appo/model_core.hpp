#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace appo {

/// Raised when a problem instance or one of its parts violates its invariants.
class InstanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LinkKind { kLogistic, kCustomTable };

std::string to_string(LinkKind kind);
LinkKind link_kind_from_string(const std::string& name);

/// Maps a reward gap to a preference probability.
///
/// The logistic link gives the Bradley-Terry model. A custom table is a
/// monotone piecewise-linear curve through (knot, value) points, held constant
/// outside the outermost knots. Every link carries `kappa()`, the minimum of its
/// derivative over the reachable gap range [-2, 2].
class LinkFunction {
 public:
  static constexpr double kGapRangeLow = -2.0;
  static constexpr double kGapRangeHigh = 2.0;

  static LinkFunction logistic();
  static LinkFunction custom_table(std::vector<double> knots, std::vector<double> values);

  LinkKind kind() const { return kind_; }
  double kappa() const { return kappa_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }

  double operator()(double z) const;
  double derivative(double z) const;
  /// Antiderivative of the link, m(z) with m' = sigma. Used as the potential
  /// of the quasi-likelihood in the MLE.
  double integral(double z) const;

  /// Smallest derivative over [a, b].
  double min_derivative(double a, double b) const;

  bool operator==(const LinkFunction& other) const = default;

 private:
  LinkFunction() = default;

  LinkKind kind_ = LinkKind::kLogistic;
  std::vector<double> knots_;
  std::vector<double> values_;
  double kappa_ = 0.0;
};

/// sigma(z). Throws std::domain_error for non-finite z.
double link_eval(const LinkFunction& link, double z);

/// min of sigma' over [a, b].
double kappa_for_range(const LinkFunction& link, double a, double b);

/// Numerically stable logistic function.
double logistic(double z);

/// Feature table phi(x, y) over finite context and action sets.
class FeatureMap {
 public:
  FeatureMap(int dim, int num_contexts, int num_actions);
  /// `table` is dim x (num_contexts * num_actions), column x * num_actions + y.
  FeatureMap(int num_contexts, int num_actions, Eigen::MatrixXd table);

  int dim() const { return static_cast<int>(table_.rows()); }
  int num_contexts() const { return num_contexts_; }
  int num_actions() const { return num_actions_; }

  auto operator()(int x, int y) const { return table_.col(column(x, y)); }
  auto operator()(int x, int y) { return table_.col(column(x, y)); }

  const Eigen::MatrixXd& table() const { return table_; }
  double max_norm() const;

 private:
  Eigen::Index column(int x, int y) const {
    return static_cast<Eigen::Index>(x) * num_actions_ + y;
  }

  int num_contexts_;
  int num_actions_;
  Eigen::MatrixXd table_;
};

/// The hidden environment: features, true parameter, link and context law.
///
/// Construction validates ||phi|| <= L/2, ||theta*|| <= B, rewards in [0, 1],
/// a strictly positive minimal gap and a normalized context distribution.
class ProblemInstance {
 public:
  ProblemInstance(FeatureMap features, Eigen::VectorXd theta_star, LinkFunction link,
                  std::vector<double> context_probs, double feature_bound, double param_bound);

  const FeatureMap& features() const { return features_; }
  const Eigen::VectorXd& theta_star() const { return theta_star_; }
  const LinkFunction& link() const { return link_; }
  const std::vector<double>& context_probs() const { return context_probs_; }
  double feature_bound() const { return feature_bound_; }
  double param_bound() const { return param_bound_; }

  int dim() const { return features_.dim(); }
  int num_contexts() const { return features_.num_contexts(); }
  int num_actions() const { return features_.num_actions(); }

  double reward(int x, int y) const { return rewards_(x, y); }
  double optimal_reward(int x) const { return optimal_rewards_[static_cast<std::size_t>(x)]; }
  /// Delta(x, y) = r*(x) - r(x, y).
  double gap(int x, int y) const { return optimal_reward(x) - reward(x, y); }
  /// Smallest nonzero Delta(x, y).
  double min_gap() const { return min_gap_; }
  const Eigen::MatrixXd& rewards() const { return rewards_; }

  /// Gaps whose magnitude is below this are treated as ties (optimal actions).
  static constexpr double kTieTolerance = 1e-12;

 private:
  FeatureMap features_;
  Eigen::VectorXd theta_star_;
  LinkFunction link_;
  std::vector<double> context_probs_;
  double feature_bound_;
  double param_bound_;
  Eigen::MatrixXd rewards_;
  std::vector<double> optimal_rewards_;
  double min_gap_ = 0.0;
};

struct HyperParams {
  double lambda = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double eta = 0.0;
  double delta = 0.05;
  double iota1 = 0.0;
  double iota2 = 0.0;
  double iota3 = 0.0;
  int gamma_halvings = 0;
};

}  // namespace appo
