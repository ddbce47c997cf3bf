#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adapt3r/camera_geometry.hpp"
#include "adapt3r/decoders.hpp"
#include "adapt3r/pipeline.hpp"

namespace a3r {

struct Primitive {
  enum class Kind { kSphere, kBox, kPlane };
  Kind kind = Kind::kSphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;                                     // sphere
  Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();  // axis-aligned box
  double plane_z = 0.0;                                    // horizontal plane
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);

  static Primitive sphere(const Eigen::Vector3d& c, double r, const Eigen::Vector3d& albedo);
  static Primitive box(const Eigen::Vector3d& c, const Eigen::Vector3d& half, const Eigen::Vector3d& albedo);
  static Primitive plane(double z, const Eigen::Vector3d& albedo);

  /// Smallest t > 0 with origin + t * dir on the surface, or +inf.
  double intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  /// Unsigned distance from p to the surface.
  double surface_distance(const Eigen::Vector3d& p) const;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  std::vector<CameraCalibration> cameras;
  Proprioception ee;
  std::uint64_t seed = 0;
  double depth_noise_sigma = 0.0;  // meters; 0 renders exact depth

  void validate() const;
};

/// Ray-casts every pixel to the nearest primitive. Depth is the z-depth in the camera
/// frame (the ray parameter for a direction with unit z), RGB the flat albedo; misses are NaN.
std::vector<CameraFrame> render(const SceneSpec& spec);

/// Distance from p to the nearest primitive surface.
double scene_surface_distance(const SceneSpec& spec, const Eigen::Vector3d& p);

nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);
SceneSpec load_scene_spec(const std::string& path);
void save_scene_spec(const std::string& path, const SceneSpec& spec);

/// Rigid rotation by `angle` about the vertical axis through `pivot`.
RigidTransform rotation_about_vertical(const Eigen::Vector3d& pivot, double angle);

// ---- Reach task ----

struct ReachTaskConfig {
  std::uint32_t image_size = 64;
  std::size_t horizon = 8;
  double step = 0.05;  // meters of EE travel per unit action
  double sphere_radius = 0.06;
  bool wrist_camera = true;
};

struct Episode {
  SceneSpec scene;
  std::size_t scene_camera = 0;  // camera index rotated by the camera sweep
  Observation obs;
  ActionChunk actions;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
};

struct Dataset {
  std::vector<Episode> episodes;
  std::size_t size() const { return episodes.size(); }
};

/// Expert chunk: a_k = (target - ee_k) / max(|target - ee_k|, step) with the EE advancing
/// by step * a_k; the gripper channel is 1 once the target is within one step.
ActionChunk expert_chunk(const Eigen::Vector3d& ee, const Eigen::Vector3d& target, std::size_t horizon, double step);

/// Tabletop with a red and a blue sphere; the instruction names which one to reach.
Episode make_reach_episode(const ReachTaskConfig& cfg, std::mt19937_64& rng);
Dataset make_reach_task(const ReachTaskConfig& cfg, std::size_t n, std::uint64_t seed);

/// Re-renders an episode with its scene camera rotated about the vertical axis through the EE.
Observation rotate_scene_camera(const Episode& ep, double angle);

/// Directory of per-episode tensor/JSON files plus manifest.json.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

/// Frames + calibration + proprioception for one observation in the encode-input layout:
/// cam<i>_rgb.a3rt (H x W x 3), cam<i>_depth.a3rt (H x W), calib.json, proprio.json.
void save_observation(const std::string& dir, const Observation& obs);
Observation load_observation(const std::string& frames_dir, const std::string& calib_path,
                             const std::string& proprio_path);

}  // namespace a3r
