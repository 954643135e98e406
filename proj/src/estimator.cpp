#include "appo/estimator.hpp"

#include <cmath>
#include <cstring>

namespace appo {

namespace {

std::string bytes_of(const Eigen::Ref<const Eigen::VectorXd>& z) {
  std::string key(static_cast<std::size_t>(z.size()) * sizeof(double), '\0');
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z(i) == 0.0 ? 0.0 : z(i);  // fold -0.0 into +0.0
    std::memcpy(key.data() + static_cast<std::size_t>(i) * sizeof(double), &v, sizeof(double));
  }
  return key;
}

Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw std::runtime_error("design matrix lost positive definiteness");
  return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace

QueryLedger::QueryLedger(int dim, double lambda, double norm_bound)
    : lambda_(lambda),
      norm_bound_(norm_bound),
      covariance_(lambda * Eigen::MatrixXd::Identity(dim, dim)),
      inverse_((1.0 / lambda) * Eigen::MatrixXd::Identity(dim, dim)) {
  if (dim < 1) throw std::invalid_argument("ledger dimension must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("ledger regularizer must be positive");
}

void QueryLedger::append(const Eigen::Ref<const Eigen::VectorXd>& z, int outcome) {
  if (z.size() != dim()) throw std::invalid_argument("duel vector has the wrong dimension");
  if (!z.allFinite()) throw std::invalid_argument("duel vector must be finite");
  if (outcome != 0 && outcome != 1) throw std::invalid_argument("duel outcome must be 0 or 1");
  if (z.norm() > norm_bound_ * (1.0 + 1e-12)) {
    throw std::invalid_argument("duel vector exceeds the feature-difference bound L");
  }

  covariance_.noalias() += z * z.transpose();
  const Eigen::VectorXd u = inverse_ * z;
  inverse_.noalias() -= (u * u.transpose()) / (1.0 + z.dot(u));
  inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
  if (++appends_since_refresh_ >= kRefreshInterval) refresh_inverse();

  duels_.push_back(Duel{z, outcome});
  auto [it, inserted] = group_index_.try_emplace(bytes_of(z), groups_.size());
  if (inserted) groups_.push_back(Group{z, 0.0, 0.0});
  auto& group = groups_[it->second];
  group.count += 1.0;
  group.wins += outcome;
}

void QueryLedger::refresh_inverse() const {
  inverse_ = invert_spd(covariance_);
  appends_since_refresh_ = 0;
}

double QueryLedger::uncertainty(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  double q = z.dot(inverse_ * z);
  if (q < -1e-12) {
    refresh_inverse();
    q = z.dot(inverse_ * z);
    if (q < -1e-12) throw std::runtime_error("negative quadratic form after refreshing the inverse");
  }
  return std::sqrt(std::max(q, 0.0));
}

Eigen::MatrixXd QueryLedger::rebuild_covariance() const {
  Eigen::MatrixXd sigma = lambda_ * Eigen::MatrixXd::Identity(dim(), dim());
  for (const auto& duel : duels_) sigma.noalias() += duel.z * duel.z.transpose();
  return sigma;
}

Eigen::VectorXd mle_score(const QueryLedger& ledger, const LinkFunction& link,
                          const Eigen::VectorXd& theta) {
  const int d = ledger.dim();
  std::vector<long double> acc(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) acc[static_cast<std::size_t>(i)] = static_cast<long double>(ledger.lambda()) * theta(i);
  for (const auto& g : ledger.groups()) {
    const double s = g.z.dot(theta);
    const long double w = static_cast<long double>(g.count) * link(s) - g.wins;
    for (int i = 0; i < d; ++i) acc[static_cast<std::size_t>(i)] += w * g.z(i);
  }
  Eigen::VectorXd out(d);
  for (int i = 0; i < d; ++i) out(i) = static_cast<double>(acc[static_cast<std::size_t>(i)]);
  return out;
}

double mle_objective(const QueryLedger& ledger, const LinkFunction& link,
                     const Eigen::VectorXd& theta) {
  long double f = 0.5L * ledger.lambda() * theta.squaredNorm();
  for (const auto& g : ledger.groups()) {
    const double s = g.z.dot(theta);
    f += static_cast<long double>(g.count) * link.integral(s) - static_cast<long double>(g.wins) * s;
  }
  return static_cast<double>(f);
}

namespace {

Eigen::MatrixXd mle_hessian(const QueryLedger& ledger, const LinkFunction& link,
                            const Eigen::VectorXd& theta) {
  Eigen::MatrixXd h = ledger.lambda() * Eigen::MatrixXd::Identity(ledger.dim(), ledger.dim());
  for (const auto& g : ledger.groups()) {
    const double w = g.count * link.derivative(g.z.dot(theta));
    if (w != 0.0) h.noalias() += w * g.z * g.z.transpose();
  }
  return h;
}

constexpr int kMaxHalvings = 60;

}  // namespace

MleEstimate solve_mle(const QueryLedger& ledger, const LinkFunction& link,
                      const Eigen::VectorXd& warm_start, const MleOptions& options) {
  const int d = ledger.dim();
  MleEstimate est;
  est.theta = warm_start.size() == d && warm_start.allFinite() ? warm_start : Eigen::VectorXd::Zero(d);
  if (ledger.groups().empty()) {
    est.theta.setZero();
    return est;
  }

  Eigen::VectorXd grad = mle_score(ledger, link, est.theta);
  double residual = grad.norm();
  double objective = mle_objective(ledger, link, est.theta);
  bool use_gradient_descent = false;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    est.iterations = iter;
    est.residual_norm = residual;
    if (residual <= options.tolerance) return est;

    Eigen::VectorXd step;
    if (!use_gradient_descent) {
      Eigen::LLT<Eigen::MatrixXd> llt(mle_hessian(ledger, link, est.theta));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(grad);
        if (!step.allFinite()) use_gradient_descent = true;
      } else {
        use_gradient_descent = true;
      }
    }
    if (use_gradient_descent) {
      // Curvature is at least lambda plus the data term; 1 / (lambda + sum n ||z||^2 / 4) is safe
      // for the logistic link and backtracking covers the rest.
      double curvature = ledger.lambda();
      for (const auto& g : ledger.groups()) curvature += g.count * g.z.squaredNorm();
      step = grad / curvature;
    }

    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, alpha *= 0.5) {
      Eigen::VectorXd candidate = est.theta - alpha * step;
      const double cand_objective = mle_objective(ledger, link, candidate);
      Eigen::VectorXd cand_grad = mle_score(ledger, link, candidate);
      const double cand_residual = cand_grad.norm();
      // Near the root the objective change drops below its rounding floor, so a
      // residual decrease also counts as progress.
      const bool decreased = cand_objective < objective - 1e-4 * alpha * grad.dot(step) ||
                             (cand_objective <= objective && cand_residual < residual) ||
                             cand_residual < 0.5 * residual;
      if (decreased && std::isfinite(cand_objective)) {
        est.theta = std::move(candidate);
        grad = std::move(cand_grad);
        residual = cand_residual;
        objective = cand_objective;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (use_gradient_descent) break;
      use_gradient_descent = true;
    }
  }
  est.residual_norm = residual;
  if (residual <= options.tolerance) return est;
  throw MleConvergenceError("MLE did not reach residual " + std::to_string(options.tolerance) +
                                " (residual " + std::to_string(residual) + ")",
                            est);
}

double confidence_radius(int dim, std::size_t num_queries, double lambda, double feature_bound,
                         double param_bound, double delta, double kappa) {
  const double n = static_cast<double>(num_queries);
  const double log_arg =
      (lambda + n * feature_bound * feature_bound / dim) / (lambda * delta);
  return (std::sqrt(lambda) * param_bound + std::sqrt(2.0 * dim * std::log(log_arg))) / kappa;
}

double optimistic_gap(const Eigen::VectorXd& theta_hat, const QueryLedger& ledger, double beta,
                      const Eigen::Ref<const Eigen::VectorXd>& target,
                      const Eigen::Ref<const Eigen::VectorXd>& base, double truncation) {
  const Eigen::VectorXd diff = target - base;
  return std::min(theta_hat.dot(diff) + beta * ledger.uncertainty(diff), truncation);
}

}  // namespace appo
