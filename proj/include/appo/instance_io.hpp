#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "appo/model_core.hpp"

namespace appo {

// Instance documents are JSON objects:
//   {"format": "appo-instance/1", "dim", "num_contexts", "num_actions",
//    "feature_bound", "param_bound", "theta_star": [...],
//    "context_probs": [...], "features": [[phi(0,0)], [phi(0,1)], ...],
//    "link": {"kind": "logistic"} | {"kind": "custom-table", "knots", "values"}}
// Doubles are written in shortest round-trip form, so save/load is bit-exact.

nlohmann::json link_to_json(const LinkFunction& link);
LinkFunction link_from_json(const nlohmann::json& doc);

nlohmann::json instance_to_json(const ProblemInstance& instance);
ProblemInstance instance_from_json(const nlohmann::json& doc);

void save_instance(const ProblemInstance& instance, const std::filesystem::path& path);
ProblemInstance load_instance(const std::filesystem::path& path);

}  // namespace appo
