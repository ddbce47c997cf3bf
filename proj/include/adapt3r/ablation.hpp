#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adapt3r/config.hpp"
#include "adapt3r/decoders.hpp"
#include "adapt3r/synth_scenes.hpp"
#include "adapt3r/train.hpp"

namespace a3r {

/// Mean over episodes of |z(rotated scene camera) - z(original)|_2 for each angle.
std::vector<double> camera_sweep_drift(const Adapt3rEncoder& encoder, const Dataset& scenes,
                                       const std::vector<double>& angles);

struct AblationConfig {
  std::vector<std::string> variants = variant_names();
  std::vector<std::uint64_t> seeds = {0};
  EncoderConfig encoder;
  PolicyConfig policy;
  TrainConfig train;
  std::vector<double> angles = {0.4, 1.0, 2.0};
  std::size_t sweep_scenes = 20;  // leading dataset episodes used for the sweep
};

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double initial_loss = 0;
  double final_loss = 0;
  std::vector<double> drift;  // one per angle
  double mean_drift = 0;
};

/// Trains one policy per (variant, seed) and measures the camera sweep on its encoder.
std::vector<AblationRow> run_ablation(const Dataset& ds, const AblationConfig& cfg);

/// Header: variant,seed,initial_loss,final_loss,drift_<angle>...,mean_drift
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        const std::vector<double>& angles);

}  // namespace a3r
