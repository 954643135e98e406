#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "appo/adpo.hpp"
#include "appo/estimator.hpp"
#include "appo/harness.hpp"
#include "appo/instance_io.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

appo::ExperimentConfig make_config(const std::string& config_json,
                                   const std::vector<std::string>& overrides) {
  auto config = appo::config_from_json(json::parse(config_json));
  for (const auto& o : overrides) appo::apply_override(config, o);
  appo::validate(config);
  return config;
}

std::string run_experiment(const std::string& config_json, const std::vector<std::string>& overrides) {
  const auto config = make_config(config_json, overrides);
  py::gil_scoped_release release;
  const auto summary = appo::run_experiment(config);
  return appo::summary_to_json(summary, config).dump();
}

std::string generate_instance(const std::string& config_json,
                              const std::vector<std::string>& overrides, std::uint64_t seed) {
  const auto config = make_config(config_json, overrides);
  return appo::instance_to_json(appo::make_instance(config, seed)).dump();
}

std::string check_run_directory(const std::string& dir) {
  json out = json::array();
  for (const auto& r : appo::check_run_directory(dir)) {
    out.push_back({{"run_id", r.run_id},
                   {"hard_violation", r.report.hard_violation()},
                   {"report", appo::report_to_json(r.report)}});
  }
  return out.dump();
}

Eigen::VectorXd solve_mle(const Eigen::MatrixXd& z, const std::vector<int>& outcomes, double lambda) {
  if (static_cast<std::size_t>(z.rows()) != outcomes.size()) {
    throw std::invalid_argument("z rows and outcomes differ in length");
  }
  appo::QueryLedger ledger(static_cast<int>(z.cols()), lambda);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    ledger.append(z.row(i).transpose(), outcomes[static_cast<std::size_t>(i)]);
  }
  return appo::solve_mle(ledger, appo::LinkFunction::logistic()).theta;
}

std::string run_adpo(const std::string& config_json, const std::vector<std::string>& overrides,
                     std::uint64_t seed) {
  const auto config = make_config(config_json, overrides);
  py::gil_scoped_release release;
  auto ac = config.adpo;
  ac.gamma = appo::tune_adpo_gamma(ac, config.dataset, config.adpo_gamma_grid,
                                   config.adpo_tuning_seeds, config.adpo_tolerance);
  const auto data = config.dataset_path ? appo::load_dataset(*config.dataset_path)
                                        : appo::make_dataset(config, seed);
  const auto run = appo::run_adpo_seed(ac, data, seed);
  return json{{"adpo", appo::summary_to_json(run.adpo)},
              {"baseline", appo::summary_to_json(run.baseline)}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<appo::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("run_experiment", &run_experiment, py::arg("config_json"), py::arg("overrides"));
  m.def("generate_instance", &generate_instance, py::arg("config_json"), py::arg("overrides"),
        py::arg("seed"));
  m.def("check_run_directory", &check_run_directory, py::arg("dir"));
  m.def("solve_mle", &solve_mle, py::arg("z"), py::arg("outcomes"), py::arg("lambda_"));
  m.def("run_adpo", &run_adpo, py::arg("config_json"), py::arg("overrides"), py::arg("seed"));
  m.def("query_bound", &appo::query_bound, py::arg("dim"), py::arg("gamma"),
        py::arg("feature_bound"), py::arg("param_bound"));
  m.def(
      "derive_hyperparams",
      [](int dim, int actions, double gap, double L, double B, double delta) {
        const auto hp = appo::derive_hyperparams(dim, actions, gap, L, B, delta,
                                                 appo::LinkFunction::logistic().kappa());
        return appo::hyperparams_to_json(hp).dump();
      },
      py::arg("dim"), py::arg("num_actions"), py::arg("min_gap"), py::arg("feature_bound") = 2.0,
      py::arg("param_bound") = 1.0, py::arg("delta") = 0.05);
  m.attr("TRANSCRIPT_HEADER") = appo::kTranscriptHeader;
}
