#pragma once

#include <string>
#include <vector>

#include "care/data.hpp"
#include "care/eval.hpp"
#include "care/model.hpp"
#include "care/train.hpp"
#include "json.hpp"

// Shared JSON section serializers for configs embedded in manifests,
// checkpoints, and CLI run configs. Parsers reject unknown keys; when
// require_all is false, missing keys keep their default-constructed values.

namespace care {

void check_json_keys(const nlohmann::json& j,
                     const std::vector<std::string>& required,
                     const std::string& where);
void check_json_allowed(const nlohmann::json& j,
                        const std::vector<std::string>& allowed,
                        const std::string& where);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& mc);
ModelConfig model_config_from_json(const nlohmann::json& j,
                                   const std::string& where, bool require_all);

nlohmann::json train_config_to_json(const TrainConfig& tc);
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   const std::string& where, bool require_all);

nlohmann::json eval_config_to_json(const EvalConfig& ec);
EvalConfig eval_config_from_json(const nlohmann::json& j,
                                 const std::string& where, bool require_all);

EvalSplit split_from_name(const std::string& name);

}  // namespace care
