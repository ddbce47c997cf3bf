#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "adapt3r/config.hpp"
#include "adapt3r/decoders.hpp"
#include "adapt3r/synth_scenes.hpp"
#include "adapt3r/train.hpp"

namespace a3r {

nlohmann::json to_json(const PolicyConfig& cfg);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ReachTaskConfig& cfg);
ReachTaskConfig reach_task_config_from_json(const nlohmann::json& j);

/// Encoder + decoder head + optimizer settings for one training run.
struct ExperimentConfig {
  EncoderConfig encoder;
  PolicyConfig policy;
  TrainConfig train;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Object with optional "encoder", "policy" and "train" members; unknown keys are a parse error.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

/// Desk-scale settings for the reach task: p=64, d=16, d_e=d_k=32, stride 4, lr 3e-3, batch 16, 200 steps.
ExperimentConfig toy_experiment_config();

/// Parses a JSON file, mapping open failures to kIo and syntax errors to kParse.
nlohmann::json read_json_file(const std::string& path);

}  // namespace a3r
