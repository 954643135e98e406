#include "appo/instance_io.hpp"

#include <fstream>

namespace appo {

namespace {

constexpr const char* kFormat = "appo-instance/1";

}  // namespace

nlohmann::json link_to_json(const LinkFunction& link) {
  nlohmann::json doc{{"kind", to_string(link.kind())}};
  if (link.kind() == LinkKind::kCustomTable) {
    doc["knots"] = link.knots();
    doc["values"] = link.values();
  }
  return doc;
}

LinkFunction link_from_json(const nlohmann::json& doc) {
  const auto kind = link_kind_from_string(doc.at("kind").get<std::string>());
  if (kind == LinkKind::kLogistic) return LinkFunction::logistic();
  return LinkFunction::custom_table(doc.at("knots").get<std::vector<double>>(),
                                    doc.at("values").get<std::vector<double>>());
}

nlohmann::json instance_to_json(const ProblemInstance& instance) {
  const auto& features = instance.features();
  nlohmann::json table = nlohmann::json::array();
  for (int x = 0; x < instance.num_contexts(); ++x) {
    for (int y = 0; y < instance.num_actions(); ++y) {
      const Eigen::VectorXd phi = features(x, y);
      table.push_back(std::vector<double>(phi.data(), phi.data() + phi.size()));
    }
  }
  const auto& theta = instance.theta_star();
  return nlohmann::json{
      {"format", kFormat},
      {"dim", instance.dim()},
      {"num_contexts", instance.num_contexts()},
      {"num_actions", instance.num_actions()},
      {"feature_bound", instance.feature_bound()},
      {"param_bound", instance.param_bound()},
      {"theta_star", std::vector<double>(theta.data(), theta.data() + theta.size())},
      {"context_probs", instance.context_probs()},
      {"link", link_to_json(instance.link())},
      {"features", std::move(table)},
  };
}

ProblemInstance instance_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", std::string{}) != kFormat) {
      throw InstanceError("not an appo instance document");
    }
    const int dim = doc.at("dim").get<int>();
    const int nx = doc.at("num_contexts").get<int>();
    const int na = doc.at("num_actions").get<int>();
    const auto& rows = doc.at("features");
    if (dim < 1 || nx < 1 || na < 1 || rows.size() != static_cast<std::size_t>(nx) * na) {
      throw InstanceError("instance dimensions do not match the feature table");
    }
    Eigen::MatrixXd table(dim, static_cast<Eigen::Index>(nx) * na);
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const auto phi = rows[c].get<std::vector<double>>();
      if (phi.size() != static_cast<std::size_t>(dim)) {
        throw InstanceError("feature vector has the wrong length");
      }
      table.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(phi.data(), dim);
    }
    const auto theta = doc.at("theta_star").get<std::vector<double>>();
    return ProblemInstance(FeatureMap(nx, na, std::move(table)),
                           Eigen::Map<const Eigen::VectorXd>(theta.data(),
                                                             static_cast<Eigen::Index>(theta.size())),
                           link_from_json(doc.at("link")),
                           doc.at("context_probs").get<std::vector<double>>(),
                           doc.at("feature_bound").get<double>(), doc.at("param_bound").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw InstanceError(std::string("malformed instance document: ") + e.what());
  }
}

void save_instance(const ProblemInstance& instance, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << instance_to_json(instance).dump(1) << '\n';
}

ProblemInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return instance_from_json(nlohmann::json::parse(in));
}

}  // namespace appo
