#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "appo/environment.hpp"
#include "appo/model_core.hpp"

namespace appo {

/// Linear reward r_theta(x, y) = beta_dpo <theta, phi(x, y)>.
struct RewardModel {
  Eigen::VectorXd theta;
  double beta_dpo = 1.0;

  double reward(const FeatureMap& features, int x, int y) const;
  double margin(const FeatureMap& features, int x, int y1, int y2) const;
};

/// One comparison. `label` is the hidden truth in {-1, +1}.
struct PreferenceItem {
  int context = 0;
  int first = 0;
  int second = 0;
  int label = 1;
};

using PreferenceBatch = std::vector<PreferenceItem>;

struct PreferenceDataset {
  FeatureMap features{1, 1, 2};
  Eigen::VectorXd theta_star;
  std::vector<PreferenceItem> train;
  std::vector<PreferenceItem> test;
};

struct DatasetSpec {
  int dim = 16;
  int num_contexts = 512;
  int num_actions = 8;
  int train_items = 4096;
  int test_items = 2048;
  double signal = 2.5;  // typical |r*(x, y1) - r*(x, y2)|
};

/// Train labels are Bradley-Terry draws; test labels are the true ordering.
PreferenceDataset generate_dataset(const DatasetSpec& spec, RngStream& rng);

nlohmann::json dataset_to_json(const PreferenceDataset& data);
PreferenceDataset dataset_from_json(const nlohmann::json& doc);
void save_dataset(const PreferenceDataset& data, const std::filesystem::path& path);
PreferenceDataset load_dataset(const std::filesystem::path& path);

/// Reveals hidden labels and counts every reveal.
class PreferenceOracle {
 public:
  int query(const PreferenceItem& item) {
    ++calls_;
    return item.label;
  }
  long calls() const { return calls_; }

 private:
  long calls_ = 0;
};

struct AdpoState {
  RewardModel model;
  double gamma = 0.0;
  double learning_rate = 0.1;
  bool pseudo_labels = true;  // false: confident items get label 0
  long queries = 0;
  long pseudo_labeled = 0;
  std::vector<double> loss_history;
};

/// A batch item with the label used for training.
struct LabeledItem {
  PreferenceItem item;
  int label = 0;
  bool queried = false;
  double confidence = 0.0;
};

double confidence(const RewardModel& model, const FeatureMap& features, int x, int y1, int y2);

struct LabelDecision {
  int label = 0;
  bool queried = false;
};

LabelDecision label_for(const RewardModel& model, const FeatureMap& features,
                        const PreferenceItem& item, double gamma, PreferenceOracle& oracle);

/// Mean of -log sigma(o * (r(y1) - r(y2))).
double adpo_loss(const RewardModel& model, const FeatureMap& features,
                 const std::vector<LabeledItem>& batch);

Eigen::VectorXd adpo_gradient(const RewardModel& model, const FeatureMap& features,
                              const std::vector<LabeledItem>& batch);

/// Labels the batch with the current model, then takes one gradient step.
std::vector<LabeledItem> adpo_step(AdpoState& state, const FeatureMap& features,
                                   const PreferenceBatch& batch, PreferenceOracle& oracle);

struct AdpoConfig {
  double gamma = 1.0;
  double learning_rate = 2.0;
  double beta_dpo = 1.0;
  int batch_size = 64;
  int epochs = 1;
  bool pseudo_labels = true;
};

struct AdpoSummary {
  double gamma = 0.0;
  std::uint64_t seed = 0;
  long items = 0;
  long queries = 0;
  long oracle_calls = 0;
  long pseudo_labeled = 0;
  double accuracy = 0.0;
  double alignment = 0.0;
  double final_loss = 0.0;
  Eigen::VectorXd theta;
  std::vector<double> loss_history;
};

/// Fraction of test items whose predicted ordering matches the true one.
double preference_accuracy(const RewardModel& model, const PreferenceDataset& data);

double cosine_alignment(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Streams the train split in batches from theta_1 = 0.
AdpoSummary run_adpo(const AdpoConfig& config, const PreferenceDataset& data,
                     PreferenceOracle& oracle, std::uint64_t seed = 0);

nlohmann::json summary_to_json(const AdpoSummary& summary);

}  // namespace appo
