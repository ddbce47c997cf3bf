#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adapt3r/cloud_builder.hpp"
#include "adapt3r/sampling.hpp"

namespace a3r {

enum class PlyColor { kRgb, kFeaturePca };

/// Vertex list for an ASCII PLY file.
struct PlyCloud {
  std::vector<double> points;             // n x 3
  std::vector<std::uint8_t> colors;       // n x 3
  std::optional<std::vector<double>> attention;  // n

  std::size_t size() const { return points.size() / 3; }
};

/// Projects rows (n x d) onto their top three principal axes, each min-max scaled to [0, 255].
/// Axis signs are fixed so the largest-magnitude loading is positive.
std::vector<std::uint8_t> feature_pca_colors(std::span<const double> features, std::size_t d);

/// Valid rows only.
PlyCloud make_ply_cloud(const FeatureCloud& cloud, PlyColor color);
/// One vertex per sampled row; `attention` must have one entry per row when given.
PlyCloud make_ply_cloud(const DownsampledCloud& cloud, PlyColor color,
                        std::optional<std::span<const double>> attention = std::nullopt);

void write_ply(const std::string& path, const PlyCloud& cloud);
std::string ply_to_string(const PlyCloud& cloud);

}  // namespace a3r
