#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adapt3r/cloud_builder.hpp"
#include "adapt3r/sampling.hpp"

namespace a3r {

enum class Pooling { kAttention, kMax };
enum class Precision { kF32, kF64 };

/// Switches for the ablation variants. Defaults are the full encoder.
struct AblationFlags {
  bool ee_frame = true;             // "no-eecf" keeps points in the base frame
  bool ee_crop = true;              // "no-ee-crop"
  bool image_features = true;       // "no-image-features" drops the feature block
  bool rgb_cloud = false;           // "rgb-cloud" replaces the feature block with RGB
  bool language = true;             // "no-lang"
  bool positional_encoding = true;  // "no-pe" feeds raw xyz
  FpsMetric fps_metric = FpsMetric::kFeature;  // "position-fps"
  Pooling pooling = Pooling::kAttention;       // "no-attention" max-pools values
};

struct EncoderConfig {
  std::size_t d = 64;      // backbone feature channels
  std::size_t d_e = 256;   // embedding width
  std::size_t d_k = 256;   // key width
  std::size_t p = 512;     // points kept by FPS
  std::size_t pe_frequencies = 10;
  CropMode crop_mode = CropMode::kTight;
  std::optional<Box> world_box;  // overrides the preset when set
  double ee_zmin = 0.0;
  AblationFlags flags;
  bool use_proprio = true;
  bool finetune_backbone = false;
  bool random_fps_start = false;
  std::size_t backbone_stride = 8;
  std::size_t backbone_hidden = 32;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF64;
  std::size_t threads = 1;

  std::size_t position_width() const { return flags.positional_encoding ? 6 * pe_frequencies : 3; }
  std::size_t feature_block_width() const;
  std::size_t language_width() const { return flags.language ? d : 0; }
  std::size_t token_width() const { return position_width() + feature_block_width() + language_width(); }
  CropConfig crop_config() const;

  void validate() const;
};

nlohmann::json to_json(const EncoderConfig& cfg);
/// Strict: unknown keys are a parse error. Missing keys keep their defaults.
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
EncoderConfig load_encoder_config(const std::string& path);

/// "full" plus the eight ablation rows.
const std::vector<std::string>& variant_names();
/// Applies a named variant's flags (kInvalidArgument for unknown names).
void apply_variant(EncoderConfig& cfg, const std::string& name);

}  // namespace a3r
