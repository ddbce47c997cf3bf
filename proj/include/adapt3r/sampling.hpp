#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adapt3r/cloud_builder.hpp"

namespace a3r {

enum class FpsMetric { kFeature, kPosition };

struct SamplerConfig {
  std::size_t p = 512;
  FpsMetric metric = FpsMetric::kFeature;
  std::size_t seed_index = 0;
  /// When set, the start row is drawn uniformly from the valid rows with this RNG seed.
  std::optional<std::uint64_t> random_start_seed;
};

std::string to_string(FpsMetric m);
FpsMetric fps_metric_from_string(const std::string& s);

/// Greedy farthest-point sampling over `dim`-wide rows using squared l2 distance.
/// Start at the first valid row at/after seed_index (wrapping), then repeatedly take the
/// valid unchosen row with the largest distance to the chosen set, lowest index on ties.
/// With fewer than p valid rows the selection order is cycled to length p.
template <typename T>
std::vector<std::size_t> farthest_point_sample_rows(std::span<const T> rows, std::size_t dim,
                                                    std::span<const std::uint8_t> valid, const SamplerConfig& cfg);

std::vector<std::size_t> farthest_point_sample(const FeatureCloud& cloud, const SamplerConfig& cfg);

struct DownsampledCloud {
  std::size_t d = 0;
  std::vector<std::size_t> indices;
  std::vector<double> points;    // p x 3
  std::vector<double> features;  // p x d
  std::vector<double> colors;    // p x 3

  std::size_t size() const { return indices.size(); }
};

DownsampledCloud gather(const FeatureCloud& cloud, std::span<const std::size_t> indices);

}  // namespace a3r
