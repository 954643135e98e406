#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "appo/model_core.hpp"

namespace appo {

/// Queried duels C_t together with the regularized design matrix
/// Sigma = lambda I + sum z z^T and its maintained inverse.
///
/// The inverse is updated by Sherman-Morrison on every append and recomputed
/// from Sigma every kRefreshInterval appends. Duels with bitwise-identical z
/// are also pooled into groups so the MLE costs O(#distinct z) per iteration.
class QueryLedger {
 public:
  static constexpr int kRefreshInterval = 256;

  struct Duel {
    Eigen::VectorXd z;
    int outcome = 0;
  };

  struct Group {
    Eigen::VectorXd z;
    double count = 0.0;
    double wins = 0.0;
  };

  QueryLedger(int dim, double lambda,
              double norm_bound = std::numeric_limits<double>::infinity());

  /// Appends one duel with z = phi1 - phi2 and outcome o in {0, 1}.
  void append(const Eigen::Ref<const Eigen::VectorXd>& z, int outcome);

  /// ||z||_{Sigma^{-1}}.
  double uncertainty(const Eigen::Ref<const Eigen::VectorXd>& z) const;

  /// Recomputes Sigma^{-1} from Sigma.
  void refresh_inverse() const;

  int dim() const { return static_cast<int>(covariance_.rows()); }
  double lambda() const { return lambda_; }
  double norm_bound() const { return norm_bound_; }
  std::size_t size() const { return duels_.size(); }
  /// Bumped on every append; lets callers skip re-solving an unchanged ledger.
  std::uint64_t version() const { return duels_.size(); }

  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& inverse() const { return inverse_; }
  const std::vector<Duel>& duels() const { return duels_; }
  const std::vector<Group>& groups() const { return groups_; }

  /// lambda I + sum over the stored duels, rebuilt from scratch.
  Eigen::MatrixXd rebuild_covariance() const;

 private:
  double lambda_;
  double norm_bound_;
  Eigen::MatrixXd covariance_;
  mutable Eigen::MatrixXd inverse_;
  mutable int appends_since_refresh_ = 0;
  std::vector<Duel> duels_;
  std::vector<Group> groups_;
  std::unordered_map<std::string, std::size_t> group_index_;
};

struct MleEstimate {
  Eigen::VectorXd theta;
  double residual_norm = 0.0;
  int iterations = 0;
};

/// Raised when the MLE solver exhausts its iteration budget; carries the best iterate.
class MleConvergenceError : public std::runtime_error {
 public:
  MleConvergenceError(const std::string& what, MleEstimate best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const MleEstimate& best() const { return best_; }

 private:
  MleEstimate best_;
};

struct MleOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
};

/// Regularized score residual lambda theta - sum (o - sigma(<theta, z>)) z.
Eigen::VectorXd mle_score(const QueryLedger& ledger, const LinkFunction& link,
                          const Eigen::VectorXd& theta);

/// Penalized negative quasi-log-likelihood whose gradient is mle_score.
double mle_objective(const QueryLedger& ledger, const LinkFunction& link,
                     const Eigen::VectorXd& theta);

/// Root of the regularized score equation by damped Newton, warm-started at
/// `warm_start` (zeros when its size does not match).
MleEstimate solve_mle(const QueryLedger& ledger, const LinkFunction& link,
                      const Eigen::VectorXd& warm_start = Eigen::VectorXd(),
                      const MleOptions& options = {});

/// kappa^{-1} (sqrt(lambda) B + sqrt(2 d log((lambda + n L^2 / d) / (lambda delta)))).
double confidence_radius(int dim, std::size_t num_queries, double lambda, double feature_bound,
                         double param_bound, double delta, double kappa);

/// min{<theta_hat, target - base> + beta ||target - base||_{Sigma^{-1}}, truncation}.
double optimistic_gap(const Eigen::VectorXd& theta_hat, const QueryLedger& ledger, double beta,
                      const Eigen::Ref<const Eigen::VectorXd>& target,
                      const Eigen::Ref<const Eigen::VectorXd>& base, double truncation = 1.0);

}  // namespace appo
