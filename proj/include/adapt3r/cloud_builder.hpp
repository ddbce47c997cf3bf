#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adapt3r/backbone.hpp"
#include "adapt3r/camera_geometry.hpp"

namespace a3r {

enum class FrameTag { kBase, kEe };

/// Fused per-cell points and features. Rows are camera-major, then feature-cell row-major.
/// Invalid rows keep their slot (m is stable) and are ignored downstream.
struct FeatureCloud {
  std::size_t d = 0;
  std::vector<double> points;       // m x 3
  std::vector<double> features;     // m x d
  std::vector<double> colors;       // m x 3, RGB of the selected source pixel
  std::vector<std::uint8_t> valid;  // m
  FrameTag frame = FrameTag::kBase;
  std::vector<std::size_t> cells_per_camera;

  std::size_t size() const { return valid.size(); }
  std::size_t valid_count() const;
  Eigen::Vector3d point(std::size_t i) const { return {points[3 * i], points[3 * i + 1], points[3 * i + 2]}; }
};

/// Index of the source pixel nearest to the center of feature cell `cell` along one axis.
/// Exact rational arithmetic; ties go to the smaller pixel index.
std::uint32_t nearest_source_pixel(std::uint32_t cell, std::uint32_t cells, std::uint32_t pixels);

/// Deprojects each frame, moves it to the base frame, resamples the point map to its
/// feature grid by nearest neighbor, and concatenates all cameras.
FeatureCloud fuse(const std::vector<CameraFrame>& frames, const std::vector<FeatureVolume>& volumes,
                  std::size_t threads = 1);

/// The two halves of fuse(), split so callers can time them separately.
std::vector<PointMap> deproject_all(const std::vector<CameraFrame>& frames, std::size_t threads = 1);
FeatureCloud fuse_point_maps(const std::vector<PointMap>& maps, const std::vector<CameraFrame>& frames,
                             const std::vector<FeatureVolume>& volumes, std::size_t threads = 1);

/// Expresses a base-frame cloud in the end-effector frame (kState if already there).
FeatureCloud to_ee_frame(const FeatureCloud& cloud, const Proprioception& proprio);

struct Box {
  Eigen::Vector3d min;
  Eigen::Vector3d max;
  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

enum class CropMode { kNone, kLoose, kTight };

struct CropConfig {
  std::optional<Box> world_box;   // base frame
  std::optional<double> ee_zmin;  // ee frame
  CropMode mode = CropMode::kTight;

  void validate() const;
};

/// Preset world boxes for the synthetic tabletop (table top at z=0, 1 m x 1 m).
/// Real deployments supply their own box.
std::optional<Box> world_box_preset(CropMode mode);
std::string to_string(CropMode mode);
CropMode crop_mode_from_string(const std::string& s);

/// Invalidates rows failing the rule stated in the cloud's own frame: the world box for a
/// base-frame cloud, the z >= ee_zmin rule for an ee-frame cloud.
FeatureCloud apply_crops(const FeatureCloud& cloud, const CropConfig& cfg);
/// EE z-crop on a cloud in either frame; base-frame points are mapped through the EE pose first.
void apply_ee_crop(FeatureCloud& cloud, const Proprioception& proprio, double ee_zmin);

}  // namespace a3r
