#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "adapt3r/camera_geometry.hpp"
#include "adapt3r/nn.hpp"
#include "adapt3r/params.hpp"

namespace a3r {

/// h x w x d row-major activations for one camera.
struct FeatureVolume {
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint32_t d = 0;
  std::vector<double> values;

  void validate() const;
};

struct LanguageEmbedding {
  std::vector<double> vector;
};

/// 2D semantic feature extractor + language embedder.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::size_t feature_dim() const = 0;
  virtual FeatureVolume extract(const CameraFrame& frame) const = 0;
  virtual LanguageEmbedding embed_language(std::string_view instruction) const = 0;
};

/// Runs the backbone and checks its channel count against `expected_d` (kDimension on mismatch).
FeatureVolume extract_features(const CameraFrame& frame, const Backbone& backbone, std::size_t expected_d);
LanguageEmbedding embed_language(std::string_view instruction, const Backbone& backbone);

FeatureVolume load_feature_volume(const std::string& path);
void save_feature_volume(const std::string& path, const FeatureVolume& v, bool as_f32 = true);

struct TestBackboneConfig {
  std::size_t d = 64;
  std::size_t stride = 8;   // patch size; output is (H/stride) x (W/stride)
  std::size_t hidden = 32;
  std::uint64_t seed = 0;
};

/// Deterministic stand-in for a pretrained image encoder: a patchify convolution
/// (kernel = stride) followed by a 1x1 convolution, SiLU between, biases zero at init.
/// Parameters live in the caller's ParamStore under "backbone." and are frozen unless
/// marked trainable, in which case backward() feeds gradients into the store layout.
/// Language embeddings hash whitespace tokens to Gaussian vectors and unit-normalize the sum.
class TestBackbone final : public Backbone {
 public:
  TestBackbone(const TestBackboneConfig& cfg, ParamStore& store);

  std::size_t feature_dim() const override { return cfg_.d; }
  FeatureVolume extract(const CameraFrame& frame) const override;
  LanguageEmbedding embed_language(std::string_view instruction) const override;

  /// Gradient of the feature volume w.r.t. backbone parameters, accumulated into `grad`.
  void backward(const CameraFrame& frame, const FeatureVolume& dfeatures, std::span<double> grad) const;

  const TestBackboneConfig& config() const { return cfg_; }

 private:
  MatD patches(const CameraFrame& frame, std::uint32_t& h, std::uint32_t& w) const;

  TestBackboneConfig cfg_;
  const ParamStore* store_;
  MlpSpec spec_;
};

}  // namespace a3r
