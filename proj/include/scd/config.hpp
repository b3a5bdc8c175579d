#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scd/datamodel.hpp"
#include "scd/losses.hpp"
#include "scd/network.hpp"
#include "scd/trainer.hpp"

namespace scd {

// Hierarchical run configuration: {data, model, losses, trainer, synth}.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  LossWeights losses;
  TrainConfig trainer;
  SynthConfig synth;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
// Model config without the keys that do not affect parameter shapes (seed, pretrained path).
nlohmann::json architecture_json(const ModelConfig& c);

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

// Defaults for every key; the schema that file contents and overrides are checked against.
nlohmann::json default_config_json();

// Recursively copies patch into base. Keys absent from base raise ConfigError naming the dotted path.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& prefix = "");

// `trainer.total_epochs` + "1" -> sets that key. Values parse as JSON, falling back to a plain string.
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value_text);

// Defaults <- config file (if any) <- overrides, then typed validation.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace scd
