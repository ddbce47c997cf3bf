#include "adapt3r/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "adapt3r/error.hpp"

namespace a3r {
namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& what) {
  require(j.is_object(), ErrorCode::kParse, what + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    require(ok, ErrorCode::kParse, "unknown " + what + " key \"" + key + "\"");
  }
}

}  // namespace

nlohmann::json to_json(const PolicyConfig& c) {
  return {{"head", to_string(c.head)},
          {"horizon", c.horizon},
          {"action_dim", c.action_dim},
          {"hidden", c.hidden},
          {"proprio_dim", c.proprio_dim},
          {"latent_dim", c.latent_dim},
          {"diffusion_steps", c.diffusion_steps},
          {"step_embed_dim", c.step_embed_dim},
          {"beta", c.beta},
          {"nll_std_floor", c.nll_std_floor},
          {"seed", c.seed}};
}

PolicyConfig policy_config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  try {
    check_keys(j,
               {"head", "horizon", "action_dim", "hidden", "proprio_dim", "latent_dim", "diffusion_steps",
                "step_embed_dim", "beta", "nll_std_floor", "seed"},
               "policy config");
    if (j.contains("head")) c.head = head_kind_from_string(j.at("head").get<std::string>());
    c.horizon = j.value("horizon", c.horizon);
    c.action_dim = j.value("action_dim", c.action_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.proprio_dim = j.value("proprio_dim", c.proprio_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.diffusion_steps = j.value("diffusion_steps", c.diffusion_steps);
    c.step_embed_dim = j.value("step_embed_dim", c.step_embed_dim);
    c.beta = j.value("beta", c.beta);
    c.nll_std_floor = j.value("nll_std_floor", c.nll_std_floor);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("policy config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const ReachTaskConfig& c) {
  return {{"image_size", c.image_size},
          {"horizon", c.horizon},
          {"step", c.step},
          {"sphere_radius", c.sphere_radius},
          {"wrist_camera", c.wrist_camera}};
}

ReachTaskConfig reach_task_config_from_json(const nlohmann::json& j) {
  ReachTaskConfig c;
  try {
    check_keys(j, {"image_size", "horizon", "step", "sphere_radius", "wrist_camera"}, "reach task config");
    c.image_size = j.value("image_size", c.image_size);
    c.horizon = j.value("horizon", c.horizon);
    c.step = j.value("step", c.step);
    c.sphere_radius = j.value("sphere_radius", c.sphere_radius);
    c.wrist_camera = j.value("wrist_camera", c.wrist_camera);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("reach task config: ") + e.what());
  }
  require(c.image_size >= 8 && c.horizon >= 1 && c.step > 0 && c.sphere_radius > 0, ErrorCode::kParse,
          "reach task config out of range");
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"encoder", to_json(c.encoder)}, {"policy", to_json(c.policy)}, {"train", to_json(c.train)}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  check_keys(j, {"encoder", "policy", "train"}, "experiment config");
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
  if (j.contains("policy")) c.policy = policy_config_from_json(j.at("policy"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  return c;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kParse, path + ": " + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(read_json_file(path));
}

ExperimentConfig toy_experiment_config() {
  ExperimentConfig c;
  c.encoder.p = 64;
  c.encoder.d = 16;
  c.encoder.d_e = 32;
  c.encoder.d_k = 32;
  c.encoder.backbone_stride = 4;
  c.policy.hidden = 64;
  c.train.lr = 3e-3;
  c.train.batch = 16;
  c.train.max_steps = 200;
  return c;
}

}  // namespace a3r
