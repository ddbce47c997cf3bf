#pragma once

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "adapt3r/config.hpp"
#include "adapt3r/pipeline.hpp"

namespace a3r {

struct BenchConfig {
  EncoderConfig encoder = default_bench_encoder();
  std::uint32_t image_size = 128;
  std::size_t cameras = 2;
  std::size_t iters = 50;
  std::size_t warmup = 3;
  std::uint64_t seed = 0;

  /// p=512, d=64, f32, stride 4 (a 32x32 feature grid per 128x128 camera).
  static EncoderConfig default_bench_encoder();
};

struct BenchResult {
  std::size_t iters = 0;
  std::size_t cloud_rows = 0;     // m
  std::size_t sampled_rows = 0;   // p
  StageTimings mean_us;           // per-iteration mean; backbone is timed separately
  double backbone_us = 0;         // mean test-backbone time for all cameras
  double total_us = 0;            // mean wall time of the core pipeline (backbone excluded)
  double total_hz() const { return total_us > 0 ? 1e6 / total_us : 0.0; }
};

nlohmann::json to_json(const BenchResult& r);

/// Times the core pipeline on a synthetic multi-camera scene with precomputed features.
BenchResult run_bench(const BenchConfig& cfg);

}  // namespace a3r
