#include "appo/adpo.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace appo {

namespace {

constexpr const char* kDatasetFormat = "appo-preferences/1";

// log(1 + e^{-z}) without overflow.
double neg_log_sigmoid(double z) {
  if (z > 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json items_to_json(const std::vector<PreferenceItem>& items) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& it : items) out.push_back({it.context, it.first, it.second, it.label});
  return out;
}

std::vector<PreferenceItem> items_from_json(const nlohmann::json& doc, const FeatureMap& features) {
  std::vector<PreferenceItem> out;
  out.reserve(doc.size());
  for (const auto& row : doc) {
    PreferenceItem it{row.at(0).get<int>(), row.at(1).get<int>(), row.at(2).get<int>(),
                      row.at(3).get<int>()};
    if (it.context < 0 || it.context >= features.num_contexts() || it.first < 0 ||
        it.first >= features.num_actions() || it.second < 0 ||
        it.second >= features.num_actions() || (it.label != 1 && it.label != -1)) {
      throw std::invalid_argument("preference record out of range");
    }
    out.push_back(it);
  }
  return out;
}

PreferenceItem draw_item(const FeatureMap& features, const Eigen::VectorXd& theta_star,
                         RngStream& rng, bool noisy) {
  PreferenceItem it;
  it.context = rng.index(features.num_contexts());
  it.first = rng.index(features.num_actions());
  it.second = rng.index(features.num_actions() - 1);
  if (it.second >= it.first) ++it.second;
  const double diff =
      theta_star.dot(features(it.context, it.first) - features(it.context, it.second));
  if (noisy) {
    it.label = rng.bernoulli(logistic(diff)) ? 1 : -1;
  } else {
    it.label = diff >= 0.0 ? 1 : -1;
  }
  return it;
}

}  // namespace

double RewardModel::reward(const FeatureMap& features, int x, int y) const {
  return beta_dpo * theta.dot(features(x, y));
}

double RewardModel::margin(const FeatureMap& features, int x, int y1, int y2) const {
  return beta_dpo * theta.dot(features(x, y1) - features(x, y2));
}

PreferenceDataset generate_dataset(const DatasetSpec& spec, RngStream& rng) {
  if (spec.dim < 1 || spec.num_contexts < 1 || spec.num_actions < 2 || spec.train_items < 0 ||
      spec.test_items < 0 || !(spec.signal > 0.0)) {
    throw std::invalid_argument("invalid preference dataset spec");
  }
  PreferenceDataset data;
  data.features = FeatureMap(spec.dim, spec.num_contexts, spec.num_actions);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
  for (int x = 0; x < spec.num_contexts; ++x) {
    for (int y = 0; y < spec.num_actions; ++y) {
      auto phi = data.features(x, y);
      for (int i = 0; i < spec.dim; ++i) phi(i) = scale * rng.normal();
    }
  }
  // phi differences have covariance (2/d) I, so this norm gives |r diff| ~ signal.
  Eigen::VectorXd theta(spec.dim);
  for (int i = 0; i < spec.dim; ++i) theta(i) = rng.normal();
  theta *= spec.signal * std::sqrt(0.5 * spec.dim) / theta.norm();
  data.theta_star = theta;
  data.train.reserve(static_cast<std::size_t>(spec.train_items));
  for (int i = 0; i < spec.train_items; ++i) {
    data.train.push_back(draw_item(data.features, theta, rng, true));
  }
  data.test.reserve(static_cast<std::size_t>(spec.test_items));
  for (int i = 0; i < spec.test_items; ++i) {
    data.test.push_back(draw_item(data.features, theta, rng, false));
  }
  return data;
}

nlohmann::json dataset_to_json(const PreferenceDataset& data) {
  nlohmann::json table = nlohmann::json::array();
  for (int x = 0; x < data.features.num_contexts(); ++x) {
    for (int y = 0; y < data.features.num_actions(); ++y) {
      table.push_back(to_vector(data.features(x, y)));
    }
  }
  return nlohmann::json{{"format", kDatasetFormat},
                        {"dim", data.features.dim()},
                        {"num_contexts", data.features.num_contexts()},
                        {"num_actions", data.features.num_actions()},
                        {"theta_star", to_vector(data.theta_star)},
                        {"features", std::move(table)},
                        {"train", items_to_json(data.train)},
                        {"test", items_to_json(data.test)}};
}

PreferenceDataset dataset_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", std::string{}) != kDatasetFormat) {
      throw std::invalid_argument("not a preference dataset document");
    }
    const int dim = doc.at("dim").get<int>();
    const int nx = doc.at("num_contexts").get<int>();
    const int na = doc.at("num_actions").get<int>();
    const auto& rows = doc.at("features");
    if (dim < 1 || nx < 1 || na < 2 || rows.size() != static_cast<std::size_t>(nx) * na) {
      throw std::invalid_argument("dataset dimensions do not match the feature table");
    }
    Eigen::MatrixXd table(dim, static_cast<Eigen::Index>(nx) * na);
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const auto phi = rows[c].get<std::vector<double>>();
      if (phi.size() != static_cast<std::size_t>(dim)) {
        throw std::invalid_argument("feature vector has the wrong length");
      }
      table.col(static_cast<Eigen::Index>(c)) = from_vector(phi);
    }
    PreferenceDataset data;
    data.features = FeatureMap(nx, na, std::move(table));
    data.theta_star = from_vector(doc.at("theta_star").get<std::vector<double>>());
    if (data.theta_star.size() != dim) throw std::invalid_argument("theta_star has the wrong length");
    data.train = items_from_json(doc.at("train"), data.features);
    data.test = items_from_json(doc.at("test"), data.features);
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed preference dataset: ") + e.what());
  }
}

void save_dataset(const PreferenceDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << dataset_to_json(data).dump() << '\n';
}

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return dataset_from_json(nlohmann::json::parse(in));
}

double confidence(const RewardModel& model, const FeatureMap& features, int x, int y1, int y2) {
  return std::abs(model.margin(features, x, y1, y2));
}

LabelDecision label_for(const RewardModel& model, const FeatureMap& features,
                        const PreferenceItem& item, double gamma, PreferenceOracle& oracle) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("confidence threshold must be nonnegative");
  const double m = model.margin(features, item.context, item.first, item.second);
  if (std::abs(m) <= gamma) return LabelDecision{oracle.query(item), true};
  return LabelDecision{m > 0.0 ? 1 : -1, false};
}

double adpo_loss(const RewardModel& model, const FeatureMap& features,
                 const std::vector<LabeledItem>& batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& li : batch) {
    const double m = model.margin(features, li.item.context, li.item.first, li.item.second);
    total += neg_log_sigmoid(li.label * m);
  }
  return total / static_cast<double>(batch.size());
}

Eigen::VectorXd adpo_gradient(const RewardModel& model, const FeatureMap& features,
                              const std::vector<LabeledItem>& batch) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.theta.size());
  if (batch.empty()) return grad;
  for (const auto& li : batch) {
    if (li.label == 0) continue;
    const Eigen::VectorXd diff =
        features(li.item.context, li.item.first) - features(li.item.context, li.item.second);
    const double m = model.beta_dpo * model.theta.dot(diff);
    const double weight = logistic(-li.label * m);
    grad -= (weight * li.label * model.beta_dpo) * diff;
  }
  return grad / static_cast<double>(batch.size());
}

std::vector<LabeledItem> adpo_step(AdpoState& state, const FeatureMap& features,
                                   const PreferenceBatch& batch, PreferenceOracle& oracle) {
  std::vector<LabeledItem> labeled;
  labeled.reserve(batch.size());
  for (const auto& item : batch) {
    LabeledItem li;
    li.item = item;
    li.confidence = confidence(state.model, features, item.context, item.first, item.second);
    const auto decision = label_for(state.model, features, item, state.gamma, oracle);
    li.queried = decision.queried;
    li.label = decision.label;
    if (li.queried) {
      ++state.queries;
    } else {
      ++state.pseudo_labeled;
      if (!state.pseudo_labels) li.label = 0;
    }
    labeled.push_back(li);
  }
  state.loss_history.push_back(adpo_loss(state.model, features, labeled));
  if (state.learning_rate != 0.0) {
    state.model.theta -= state.learning_rate * adpo_gradient(state.model, features, labeled);
  }
  return labeled;
}

double preference_accuracy(const RewardModel& model, const PreferenceDataset& data) {
  if (data.test.empty()) return 0.0;
  long correct = 0;
  for (const auto& it : data.test) {
    const double m = model.margin(data.features, it.context, it.first, it.second);
    const int predicted = m > 0.0 ? 1 : (m < 0.0 ? -1 : 0);
    if (predicted == it.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.test.size());
}

double cosine_alignment(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

AdpoSummary run_adpo(const AdpoConfig& config, const PreferenceDataset& data,
                     PreferenceOracle& oracle, std::uint64_t seed) {
  if (config.batch_size < 1 || config.epochs < 0 || !(config.beta_dpo > 0.0)) {
    throw std::invalid_argument("invalid ADPO config");
  }
  AdpoState state;
  state.model.theta = Eigen::VectorXd::Zero(data.features.dim());
  state.model.beta_dpo = config.beta_dpo;
  state.gamma = config.gamma;
  state.learning_rate = config.learning_rate;
  state.pseudo_labels = config.pseudo_labels;
  const auto calls_before = oracle.calls();

  const std::size_t n = data.train.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      PreferenceBatch batch(data.train.begin() + static_cast<std::ptrdiff_t>(start),
                            data.train.begin() + static_cast<std::ptrdiff_t>(stop));
      adpo_step(state, data.features, batch, oracle);
    }
  }

  AdpoSummary s;
  s.gamma = config.gamma;
  s.seed = seed;
  s.items = state.queries + state.pseudo_labeled;
  s.queries = state.queries;
  s.oracle_calls = oracle.calls() - calls_before;
  s.pseudo_labeled = state.pseudo_labeled;
  s.accuracy = preference_accuracy(state.model, data);
  s.alignment = cosine_alignment(state.model.theta, data.theta_star);
  s.final_loss = state.loss_history.empty() ? 0.0 : state.loss_history.back();
  s.theta = state.model.theta;
  s.loss_history = std::move(state.loss_history);
  return s;
}

nlohmann::json summary_to_json(const AdpoSummary& summary) {
  return nlohmann::json{{"gamma", summary.gamma},
                        {"seed", summary.seed},
                        {"items", summary.items},
                        {"queries", summary.queries},
                        {"oracle_calls", summary.oracle_calls},
                        {"pseudo_labeled", summary.pseudo_labeled},
                        {"accuracy", summary.accuracy},
                        {"alignment", summary.alignment},
                        {"final_loss", summary.final_loss},
                        {"theta", to_vector(summary.theta)}};
}

}  // namespace appo
