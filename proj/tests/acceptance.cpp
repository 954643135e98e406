// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "appo/adpo.hpp"
#include "appo/estimator.hpp"
#include "appo/harness.hpp"

using namespace appo;

namespace {

constexpr long kHorizon = 50000;
constexpr int kSeeds = 20;
constexpr int kContexts = 5;

// tolerances
constexpr double kMleInf = 1e-6;
constexpr double kMleResidual = 1e-10;
constexpr double kDrift = 1e-8;
constexpr double kGradRel = 1e-5;
constexpr double kPlateauFrac = 0.05;
constexpr double kAdpoQueryFrac = 0.60;
constexpr double kAdpoAccDrop = 0.02;
constexpr double kAdpoSeconds = 120.0;
constexpr double kSuiteSeconds = 600.0;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig calibrated(int d, int actions, double gap, long horizon) {
  ExperimentConfig c;
  c.instance = InstanceSpec{d, kContexts, actions, gap, 2.0, 1.0, false};
  c.preset = HyperPreset::kCalibrated;
  c.horizon = horizon;
  c.write_files = false;
  return c;
}

struct SuiteRun {
  int d;
  int actions;
  double gap;
  RunRecord rec;
};

// penalized NLL gradient descent, written from the objective
Eigen::VectorXd gd_oracle(const std::vector<Eigen::VectorXd>& zs, const std::vector<int>& os,
                          double lambda) {
  const int d = static_cast<int>(zs[0].size());
  double lip = lambda;
  for (const auto& z : zs) lip += 0.25 * z.squaredNorm();
  Eigen::VectorXd th = Eigen::VectorXd::Zero(d);
  for (long it = 0; it < 5000000; ++it) {
    Eigen::VectorXd g = lambda * th;
    for (std::size_t i = 0; i < zs.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-th.dot(zs[i])));
      g -= (os[i] - p) * zs[i];
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
    th -= g / lip;
  }
  return th;
}

}  // namespace

int main() {
  const auto t_all = std::chrono::steady_clock::now();

  // standard suite
  std::vector<SuiteRun> suite;
  const auto t_suite = std::chrono::steady_clock::now();
  for (int d : {2, 5, 10}) {
    for (int actions : {5, 10}) {
      for (double gap : {0.1, 0.3}) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto cfg = calibrated(d, actions, gap, kHorizon);
        long qmax = 0;
        for (int s = 1; s <= kSeeds; ++s) {
          auto rec = run_single(cfg, static_cast<std::uint64_t>(s));
          qmax = std::max(qmax, rec.final_queries);
          suite.push_back({d, actions, gap, std::move(rec)});
        }
        std::printf("  suite d=%d |A|=%d gap=%.1f: max |C_T| %ld, %.1fs\n", d, actions, gap, qmax,
                    seconds_since(t0));
        std::fflush(stdout);
      }
    }
  }
  const double suite_secs = seconds_since(t_suite);

  // 1
  {
    int violations = 0;
    int errors = 0;
    for (const auto& r : suite) {
      if (!r.rec.error.empty()) {
        ++errors;
        continue;
      }
      const double cap =
          query_bound(r.d, r.rec.params.gamma, 2.0, 1.0);
      if (static_cast<double>(r.rec.final_queries) > cap) ++violations;
    }
    report(1, violations == 0 && errors == 0 && suite_secs <= kSuiteSeconds,
           fmt("%zu runs, %d bound violations, %d errors, %.0fs (limit %.0fs)", suite.size(),
               violations, errors, suite_secs, kSuiteSeconds));
  }

  // 2
  {
    bool pass = true;
    std::string detail;
    for (int actions : {5, 10}) {
      int ok = 0;
      for (const auto& r : suite) {
        if (r.d != 5 || r.gap != 0.3 || r.actions != actions) continue;
        ok += static_cast<double>(r.rec.queries_second_half) <=
              kPlateauFrac * static_cast<double>(r.rec.final_queries);
      }
      pass = pass && ok >= 18;
      detail += fmt("|A|=%d: %d/20 seeds plateaued; ", actions, ok);
    }
    report(2, pass, detail + "need >= 18/20");
  }

  // 3
  {
    int held = 0;
    int nonzero = 0;
    int flat = 0;
    for (const auto& r : suite) {
      if (!r.rec.report.concentration_held) continue;
      ++held;
      nonzero += r.rec.nonquery_regret != 0.0;
      flat += r.rec.regret_final_tenth <= std::numeric_limits<double>::epsilon();
    }
    const bool pass = held > 0 && nonzero == 0 && flat >= 0.9 * held;
    report(3, pass,
           fmt("%d/%zu runs held concentration; %d with non-query regret; %d flat over final 10%%",
               held, suite.size(), nonzero, flat));
  }

  // 4
  {
    const std::vector<double> gaps{0.1, 0.2, 0.4};
    std::vector<double> means;
    for (double gap : gaps) {
      const auto cfg = calibrated(2, 5, gap, kHorizon);
      double sum = 0.0;
      for (int s = 1; s <= kSeeds; ++s) sum += run_single(cfg, 1000 + s).final_queries;
      means.push_back(sum / kSeeds);
    }
    const bool mono = means[0] > means[1] && means[1] > means[2];
    const double ratio = means[0] / means[2];
    report(4, mono && ratio >= 4.0,
           fmt("mean |C_T| %.1f, %.1f, %.1f for gap 0.1, 0.2, 0.4; ratio %.2f (need >= 4)",
               means[0], means[1], means[2], ratio));

    auto theory = calibrated(2, 5, 0.1, 2000);
    theory.preset = HyperPreset::kTheory;
    std::vector<double> tmeans;
    for (double gap : gaps) {
      theory.instance.min_gap = gap;
      double sum = 0.0;
      for (int s = 1; s <= 5; ++s) sum += run_single(theory, 1000 + s).final_queries;
      tmeans.push_back(sum / 5);
    }
    std::printf("  info: theory preset, T=2000: mean |C_T| %.1f, %.1f, %.1f\n", tmeans[0], tmeans[1],
                tmeans[2]);
  }

  // 5
  {
    RngStream rng(55, 0);
    const auto link = LinkFunction::logistic();
    double worst_inf = 0.0;
    double worst_res = 0.0;
    for (int k = 0; k < 100; ++k) {
      const int d = 1 + rng.index(4);
      const int n = 1 + rng.index(300);
      const double lambda = 0.5 + rng.uniform();
      Eigen::VectorXd truth(d);
      for (int i = 0; i < d; ++i) truth[i] = rng.normal();
      QueryLedger ledger(d, lambda);
      std::vector<Eigen::VectorXd> zs;
      std::vector<int> os;
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd z(d);
        for (int j = 0; j < d; ++j) z[j] = rng.uniform() * 2.0 - 1.0;
        const int o = rng.bernoulli(1.0 / (1.0 + std::exp(-truth.dot(z)))) ? 1 : 0;
        ledger.append(z, o);
        zs.push_back(z);
        os.push_back(o);
      }
      const auto est = solve_mle(ledger, link);
      const auto oracle = gd_oracle(zs, os, lambda);
      worst_inf = std::max(worst_inf, (est.theta - oracle).lpNorm<Eigen::Infinity>());
      worst_res = std::max(worst_res, mle_score(ledger, link, est.theta).norm());
    }
    report(5, worst_inf <= kMleInf && worst_res <= kMleResidual,
           fmt("100 ledgers: max l-inf error %.2e (limit %.0e), max residual %.2e (limit %.0e)",
               worst_inf, kMleInf, worst_res, kMleResidual));
  }

  // 6
  std::vector<RunRecord> coverage;
  {
    auto cfg = calibrated(2, 5, 0.3, 2000);
    cfg.preset = HyperPreset::kTheory;
    cfg.delta = 0.05;
    int held = 0;
    for (int s = 1; s <= 200; ++s) {
      coverage.push_back(run_single(cfg, 5000 + s));
      held += coverage.back().report.concentration_held;
    }
    report(6, held >= 190, fmt("concentration held in %d/200 runs (need >= 190)", held));
  }

  // 7
  {
    int held = 0;
    int bad = 0;
    auto visit = [&](const RunRecord& r) {
      if (!r.report.concentration_held) return;
      ++held;
      bad += !r.report.get("optimism").passed;
    };
    for (const auto& r : suite) visit(r.rec);
    for (const auto& r : coverage) visit(r);
    report(7, held > 0 && bad == 0,
           fmt("%d runs held concentration; %d with optimism violations", held, bad));
  }

  // 8
  {
    int total = 0;
    int passed = 0;
    for (const auto& r : suite) {
      ++total;
      passed += r.rec.report.get("elliptical_potential").passed;
    }
    for (const auto& r : coverage) {
      ++total;
      passed += r.report.get("elliptical_potential").passed;
    }
    report(8, passed == total, fmt("elliptical potential held in %d/%d runs", passed, total));
  }

  // 9
  {
    RngStream rng(9, 0);
    const int d = 8;
    QueryLedger ledger(d, 1.0);
    for (int i = 0; i < 10000; ++i) {
      Eigen::VectorXd z(d);
      for (int j = 0; j < d; ++j) z[j] = rng.uniform() * 2.0 - 1.0;
      ledger.append(z, rng.index(2));
    }
    const Eigen::MatrixXd fresh = ledger.covariance().inverse();
    const double err = (ledger.inverse() - fresh).norm();
    report(9, err <= kDrift, fmt("Frobenius drift %.2e after 10000 updates (limit %.0e)", err, kDrift));
  }

  // 10
  {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    const std::vector<double> grid{0.4, 0.5, 0.6, 0.7, 0.8, 1.0};
    const double gamma =
        tune_adpo_gamma(cfg.adpo, cfg.dataset, grid, cfg.adpo_tuning_seeds, cfg.adpo_tolerance);
    AdpoConfig ac = cfg.adpo;
    ac.gamma = gamma;
    int ok = 0;
    double frac_sum = 0.0;
    double drop_sum = 0.0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
      const auto data = make_dataset(cfg, s);
      const auto run = run_adpo_seed(ac, data, s);
      const double frac =
          static_cast<double>(run.adpo.oracle_calls) / static_cast<double>(run.baseline.oracle_calls);
      const double drop = run.baseline.accuracy - run.adpo.accuracy;
      frac_sum += frac;
      drop_sum += drop;
      ok += frac <= kAdpoQueryFrac && drop <= kAdpoAccDrop;
    }
    const double secs = seconds_since(t0);
    report(10, ok >= 8 && secs <= kAdpoSeconds,
           fmt("tuned gamma %.2f; %d/10 seeds within budget; mean query fraction %.3f, mean "
               "accuracy drop %.4f; %.1fs",
               gamma, ok, frac_sum / 10, drop_sum / 10, secs));
  }

  // 11
  {
    RngStream rng(11, 0);
    DatasetSpec spec;
    spec.dim = 6;
    spec.num_contexts = 16;
    spec.train_items = 64;
    spec.test_items = 8;
    const auto data = generate_dataset(spec, rng);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      RewardModel m{Eigen::VectorXd(spec.dim), 0.5 + rng.uniform()};
      for (int i = 0; i < spec.dim; ++i) m.theta[i] = 2.0 * rng.normal();
      std::vector<LabeledItem> batch;
      for (int i = 0; i < 16; ++i) {
        LabeledItem li;
        li.item = data.train[static_cast<std::size_t>(rng.index(spec.train_items))];
        li.label = rng.index(3) - 1;
        batch.push_back(li);
      }
      const Eigen::VectorXd g = adpo_gradient(m, data.features, batch);
      Eigen::VectorXd fd(spec.dim);
      const double h = 1e-5;
      for (int i = 0; i < spec.dim; ++i) {
        RewardModel up = m;
        RewardModel dn = m;
        up.theta[i] += h;
        dn.theta[i] -= h;
        fd[i] = (adpo_loss(up, data.features, batch) - adpo_loss(dn, data.features, batch)) / (2 * h);
      }
      const double rel = (g - fd).norm() / std::max(fd.norm(), 1e-8);
      worst = std::max(worst, rel);
    }
    report(11, worst <= kGradRel,
           fmt("max relative error %.2e over 100 states (limit %.0e)", worst, kGradRel));
  }

  // 12
  {
    RngStream rng(12, 0);
    DatasetSpec spec;
    spec.dim = 4;
    spec.num_contexts = 8;
    spec.train_items = 256;
    spec.test_items = 8;
    const auto data = generate_dataset(spec, rng);
    bool exact = true;
    int confident = 0;
    int batches = 0;
    for (int k = 0; k < 50; ++k) {
      AdpoState st;
      st.model = RewardModel{3.0 * data.theta_star, 1.0};
      st.gamma = 0.05 + 0.5 * rng.uniform();
      st.learning_rate = 1.0;
      st.pseudo_labels = false;
      PreferenceBatch batch;
      for (int i = 0; i < 32; ++i)
        batch.push_back(data.train[static_cast<std::size_t>(rng.index(spec.train_items))]);
      PreferenceOracle oracle;
      const Eigen::VectorXd before = st.model.theta;
      const auto labeled = adpo_step(st, data.features, batch, oracle);
      std::vector<LabeledItem> queried_only;
      std::vector<LabeledItem> confident_only;
      for (const auto& li : labeled) {
        if (li.queried) {
          queried_only.push_back(li);
        } else {
          confident_only.push_back(li);
          exact = exact && li.label == 0;
          // single-item gradient must be exactly zero
          const Eigen::VectorXd g = adpo_gradient(RewardModel{before, 1.0}, data.features, {li});
          exact = exact && (g.array() == 0.0).all();
        }
      }
      confident += static_cast<int>(confident_only.size());
      if (!confident_only.empty()) {
        const Eigen::VectorXd g =
            adpo_gradient(RewardModel{before, 1.0}, data.features, confident_only);
        exact = exact && (g.array() == 0.0).all();
      }
      if (queried_only.empty()) {
        ++batches;
        exact = exact && (st.model.theta.array() == before.array()).all();
      }
    }
    report(12, exact && confident > 0,
           fmt("%d confident items, %d all-confident batches; zero gradient exact: %s", confident,
               batches, exact ? "yes" : "no"));
  }

  std::printf("%d failing criteria, %.0fs total\n", failures, seconds_since(t_all));
  return failures == 0 ? 0 : 1;
}
