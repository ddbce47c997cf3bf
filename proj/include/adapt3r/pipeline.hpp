#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adapt3r/backbone.hpp"
#include "adapt3r/cloud_builder.hpp"
#include "adapt3r/config.hpp"
#include "adapt3r/encoder.hpp"
#include "adapt3r/sampling.hpp"

namespace a3r {

/// One timestep of sensor input.
struct Observation {
  std::vector<CameraFrame> frames;
  Proprioception proprio;
  std::string instruction;
  /// Precomputed per-camera feature volumes; the built-in backbone runs when absent.
  std::optional<std::vector<FeatureVolume>> features;
  /// Precomputed language embedding; the built-in embedder runs when absent.
  std::optional<LanguageEmbedding> language;
};

/// Wall-clock microseconds per pipeline stage.
struct StageTimings {
  double backbone = 0;
  double deproject = 0;
  double fuse = 0;
  double crop = 0;
  double fps = 0;
  double pe = 0;
  double pool = 0;
};

/// Everything upstream of the learned pooling; fixed while the backbone is frozen.
struct PreparedCloud {
  FeatureCloud cloud;  // after crops, in the encoder's working frame
  DownsampledCloud sampled;
  LanguageEmbedding language;
  std::vector<FeatureVolume> volumes;
};

/// The observation encoder: backbone -> fused cloud -> crops -> FPS -> tokens -> pooling.
/// Parameters live in a caller-owned ParamStore so decoders can share one optimizer.
class Adapt3rEncoder {
 public:
  Adapt3rEncoder(const EncoderConfig& cfg, ParamStore& store);

  const EncoderConfig& config() const { return cfg_; }
  const PoolSpec& pool_spec() const { return pool_; }
  const TestBackbone& backbone() const { return *backbone_; }
  TokenLayout layout() const { return token_layout(cfg_); }

  PreparedCloud prepare(const Observation& obs, StageTimings* timings = nullptr) const;
  MatD tokens(const PreparedCloud& prepared, StageTimings* timings = nullptr) const;

  /// Inference in the configured precision.
  SceneEncoding encode(const Observation& obs, StageTimings* timings = nullptr) const;
  SceneEncoding encode_tokens(const MatD& tokens, StageTimings* timings = nullptr) const;

  /// f64 forward that keeps activations for backward().
  SceneEncoding forward(const MatD& tokens, const PoolWeights<double>& w, PoolCache& cache) const;
  /// Accumulates parameter gradients of <dz, z>; returns the token gradient.
  MatD backward(const PoolWeights<double>& w, const PoolCache& cache, const VecD& dz, std::span<double> grad) const;
  /// Routes a token gradient through the gather and the test backbone (finetuning only).
  void backward_backbone(const Observation& obs, const PreparedCloud& prepared, const MatD& dtokens,
                         std::span<double> grad) const;

 private:
  EncoderConfig cfg_;
  const ParamStore* store_;
  std::unique_ptr<TestBackbone> backbone_;
  PoolSpec pool_;
};

}  // namespace a3r
