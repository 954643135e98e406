#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "appo/environment.hpp"
#include "appo/estimator.hpp"

using namespace appo;

namespace {

struct Duel {
  Eigen::VectorXd z;
  int o;
};

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

Eigen::VectorXd gradient(const std::vector<Duel>& duels, double lambda, const Eigen::VectorXd& th) {
  Eigen::VectorXd g = lambda * th;
  for (const auto& d : duels) g -= (d.o - sigmoid(th.dot(d.z))) * d.z;
  return g;
}

// Plain fixed-step gradient descent on the penalized logistic negative log-likelihood.
Eigen::VectorXd gd_oracle(const std::vector<Duel>& duels, double lambda, int dim) {
  double lip = lambda;
  for (const auto& d : duels) lip += 0.25 * d.z.squaredNorm();
  Eigen::VectorXd th = Eigen::VectorXd::Zero(dim);
  for (int it = 0; it < 2000000; ++it) {
    const Eigen::VectorXd g = gradient(duels, lambda, th);
    if (g.norm() < 1e-13) break;
    th -= g / lip;
  }
  return th;
}

double bisect_scalar() {
  // root of f(t) = t - (1 - sigma(t)) on [0, 1]
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid - (1.0 - sigmoid(mid)) > 0.0) hi = mid; else lo = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<Duel> random_duels(std::mt19937_64& gen, int dim, int n, const Eigen::VectorXd& theta) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Duel> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(dim);
    for (int k = 0; k < dim; ++k) z(k) = g(gen);
    z *= 0.8 * u(gen) / z.norm();
    out.push_back({z, u(gen) < sigmoid(theta.dot(z)) ? 1 : 0});
  }
  return out;
}

}  // namespace

TEST(QueryLedger, ZeroAppendLeavesMatricesUnchanged) {
  QueryLedger ledger(3, 1.0);
  ledger.append(Eigen::VectorXd::Zero(3), 1);
  EXPECT_EQ(ledger.covariance(), Eigen::MatrixXd::Identity(3, 3));
  EXPECT_EQ(ledger.inverse(), Eigen::MatrixXd::Identity(3, 3));
  EXPECT_EQ(ledger.size(), 1u);
}

TEST(QueryLedger, TwoByTwoExample) {
  QueryLedger ledger(2, 1.0);
  ledger.append(Eigen::Vector2d(1.0, 0.0), 1);
  EXPECT_NEAR((ledger.covariance() - Eigen::Vector2d(2.0, 1.0).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-15);
  EXPECT_NEAR((ledger.inverse() - Eigen::Vector2d(0.5, 1.0).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-15);
  EXPECT_NEAR(ledger.uncertainty(Eigen::Vector2d(1.0, 0.0)), std::sqrt(0.5), 1e-15);
}

TEST(QueryLedger, RejectsBadDuels) {
  QueryLedger ledger(2, 1.0, 1.0);
  EXPECT_THROW(ledger.append(Eigen::Vector2d(std::nan(""), 0.0), 1), std::invalid_argument);
  EXPECT_THROW(ledger.append(Eigen::Vector2d(2.0, 0.0), 1), std::invalid_argument);
  EXPECT_THROW(ledger.append(Eigen::Vector2d(0.1, 0.0), 2), std::invalid_argument);
}

TEST(QueryLedger, UncertaintyBasics) {
  QueryLedger ledger(4, 1.0);
  EXPECT_EQ(ledger.uncertainty(Eigen::VectorXd::Zero(4)), 0.0);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(4);
  e(2) = 1.0;
  EXPECT_DOUBLE_EQ(ledger.uncertainty(e), 1.0);
}

TEST(QueryLedger, MaintainedInverseTracksFreshInverse) {
  std::mt19937_64 gen(5);
  QueryLedger ledger(5, 1.0);
  const auto duels = random_duels(gen, 5, 1000, Eigen::VectorXd::Zero(5));
  for (const auto& d : duels) {
    ledger.append(d.z, d.o);
    EXPECT_LE((ledger.inverse() * ledger.covariance() - Eigen::MatrixXd::Identity(5, 5)).norm(), 1e-8);
  }
  EXPECT_LE((ledger.inverse() - ledger.covariance().inverse()).norm(), 1e-8);
  EXPECT_LE((ledger.covariance() - ledger.rebuild_covariance()).norm(), 1e-9);
}

TEST(QueryLedger, CovarianceGrowsAndUncertaintyShrinks) {
  std::mt19937_64 gen(8);
  QueryLedger ledger(3, 0.5);
  const auto duels = random_duels(gen, 3, 200, Eigen::VectorXd::Zero(3));
  const Eigen::Vector3d probe(0.3, -0.2, 0.5);
  double last_u = ledger.uncertainty(probe);
  for (const auto& d : duels) {
    const Eigen::MatrixXd before = ledger.covariance();
    ledger.append(d.z, d.o);
    const Eigen::MatrixXd diff = ledger.covariance() - before;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diff);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    const double u = ledger.uncertainty(probe);
    EXPECT_LE(u, last_u + 1e-12);
    last_u = u;
  }
}

TEST(SolveMle, EmptyLedgerGivesZero) {
  QueryLedger ledger(3, 2.0);
  const auto est = solve_mle(ledger, LinkFunction::logistic());
  EXPECT_EQ(est.theta, Eigen::VectorXd::Zero(3));
}

TEST(SolveMle, ScalarMatchesBisection) {
  QueryLedger ledger(1, 1.0);
  ledger.append(Eigen::VectorXd::Ones(1), 1);
  const auto est = solve_mle(ledger, LinkFunction::logistic());
  EXPECT_NEAR(est.theta(0), bisect_scalar(), 1e-12);
  EXPECT_NEAR(est.theta(0), 0.401058, 1e-6);
  EXPECT_LE(est.residual_norm, 1e-10);
}

TEST(SolveMle, MatchesGradientDescentOracle) {
  std::mt19937_64 gen(21);
  const Eigen::Vector3d theta_star(0.5, -0.6, 0.3);
  const auto duels = random_duels(gen, 3, 500, theta_star);
  QueryLedger ledger(3, 1.0);
  for (const auto& d : duels) ledger.append(d.z, d.o);
  const auto est = solve_mle(ledger, LinkFunction::logistic());
  const auto oracle = gd_oracle(duels, 1.0, 3);
  EXPECT_LE((est.theta - oracle).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_LE(gradient(duels, 1.0, est.theta).norm(), 1e-9);
  EXPECT_LE(mle_score(ledger, LinkFunction::logistic(), est.theta).norm(), 1e-10);
}

TEST(SolveMle, PermutationInvariant) {
  std::mt19937_64 gen(33);
  auto duels = random_duels(gen, 4, 300, Eigen::Vector4d(0.2, 0.1, -0.4, 0.3));
  QueryLedger a(4, 1.0), b(4, 1.0);
  for (const auto& d : duels) a.append(d.z, d.o);
  std::shuffle(duels.begin(), duels.end(), gen);
  for (const auto& d : duels) b.append(d.z, d.o);
  const auto ta = solve_mle(a, LinkFunction::logistic()).theta;
  const auto tb = solve_mle(b, LinkFunction::logistic()).theta;
  EXPECT_LE((ta - tb).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(SolveMle, PooledDuplicatesMatchUnpooledOracle) {
  QueryLedger ledger(2, 0.5);
  std::vector<Duel> duels;
  const Eigen::Vector2d z1(0.4, 0.1), z2(-0.2, 0.5);
  for (int i = 0; i < 40; ++i) {
    const Duel d{i % 3 ? Eigen::VectorXd(z1) : Eigen::VectorXd(z2), i % 4 ? 1 : 0};
    duels.push_back(d);
    ledger.append(d.z, d.o);
  }
  EXPECT_EQ(ledger.groups().size(), 2u);
  const auto est = solve_mle(ledger, LinkFunction::logistic());
  EXPECT_LE((est.theta - gd_oracle(duels, 0.5, 2)).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(SolveMle, CustomLinkSolvesScoreEquation) {
  const auto link = LinkFunction::custom_table({-2.0, 0.0, 2.0}, {0.1, 0.5, 0.9});
  std::mt19937_64 gen(41);
  const auto duels = random_duels(gen, 2, 200, Eigen::Vector2d(0.5, 0.5));
  QueryLedger ledger(2, 1.0);
  for (const auto& d : duels) ledger.append(d.z, d.o);
  const auto est = solve_mle(ledger, link);
  EXPECT_LE(mle_score(ledger, link, est.theta).norm(), 1e-10);
}

TEST(SolveMle, IterationCapRaisesWithBestIterate) {
  std::mt19937_64 gen(2);
  const auto duels = random_duels(gen, 3, 100, Eigen::Vector3d(1.0, 0.0, 0.0));
  QueryLedger ledger(3, 1.0);
  for (const auto& d : duels) ledger.append(d.z, d.o);
  MleOptions opts;
  opts.max_iterations = 1;
  opts.tolerance = 1e-300;
  try {
    solve_mle(ledger, LinkFunction::logistic(), Eigen::VectorXd(), opts);
    FAIL() << "expected a convergence error";
  } catch (const MleConvergenceError& e) {
    EXPECT_EQ(e.best().theta.size(), 3);
  }
}

TEST(ConfidenceRadius, ClosedForm) {
  // d = 1, B = 1, delta = 1, no queries: the log argument is 1.
  EXPECT_NEAR(confidence_radius(1, 0, 1.0, 1.0, 1.0, 1.0 - 1e-16, 0.5), 2.0, 1e-7);
  const double kappa = 0.104994;
  const double independent =
      (std::sqrt(1.0) * 1.0 + std::sqrt(2.0 * 2 * std::log((1.0 + 100 * 1.0 / 2) / (1.0 * 0.05)))) / kappa;
  EXPECT_NEAR(confidence_radius(2, 100, 1.0, 1.0, 1.0, 0.05, kappa), independent, 1e-12);
  double last = 0.0;
  for (std::size_t n = 0; n < 2000; n += 37) {
    const double b = confidence_radius(3, n, 0.5, 2.0, 1.0, 0.05, kappa);
    EXPECT_GE(b, last);
    last = b;
  }
}

TEST(OptimisticGap, Examples) {
  QueryLedger ledger(2, 1.0);
  const Eigen::Vector2d phi(0.3, 0.1);
  EXPECT_EQ(optimistic_gap(Eigen::Vector2d::Zero(), ledger, 1.0, phi, phi), 0.0);
  // uncertainty 0.5 with theta_hat = 0 and beta = 1
  EXPECT_DOUBLE_EQ(optimistic_gap(Eigen::Vector2d::Zero(), ledger, 1.0, Eigen::Vector2d(0.5, 0.0),
                                  Eigen::Vector2d::Zero()),
                   0.5);
  // 0.8 + 0.6 truncates to 1
  EXPECT_EQ(optimistic_gap(Eigen::Vector2d(1.0, 0.0), ledger, 0.75, Eigen::Vector2d(0.8, 0.0),
                           Eigen::Vector2d::Zero()),
            1.0);
  EXPECT_DOUBLE_EQ(optimistic_gap(Eigen::Vector2d(1.0, 0.0), ledger, 0.75, Eigen::Vector2d(0.8, 0.0),
                                  Eigen::Vector2d::Zero(), 2.0),
                   0.8 + 0.6);
}

TEST(EllipticalPotential, BoundHoldsForRandomSequences) {
  std::mt19937_64 gen(77);
  const double lambda = 1.0, l = 1.0;
  for (int d = 1; d <= 6; ++d) {
    QueryLedger ledger(d, lambda);
    const auto duels = random_duels(gen, d, 3000, Eigen::VectorXd::Zero(d));
    double sum = 0.0;
    for (const auto& du : duels) {
      const double u = ledger.uncertainty(du.z);
      sum += std::min(1.0, u * u);
      ledger.append(du.z, du.o);
    }
    const double n = static_cast<double>(duels.size());
    EXPECT_LE(sum, 2.0 * d * std::log((lambda * d + n * l * l) / (lambda * d)));
  }
}
