#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace a3r {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::uint32_t width = 1;
  std::uint32_t height = 1;

  // Throws kInvalidArgument when focal lengths or principal point are out of range.
  void validate() const;
};

/// Rotation + translation. Applied as R * x + t.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  // Throws if the rotation is not orthonormal with det +1 within kRotationTolerance.
  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Eigen::Vector3d& t);
  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                        const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());

  /// Row-major 4x4 homogeneous matrix. Rotations drifting up to kRepairTolerance
  /// from orthonormal are repaired by polar decomposition; beyond that they are rejected.
  static RigidTransform from_row_major(std::span<const double> m16);
  std::array<double, 16> to_row_major() const;

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }
  RigidTransform inverse() const;
  /// (a * b).apply(x) == a.apply(b.apply(x))
  RigidTransform operator*(const RigidTransform& rhs) const;

  static constexpr double kRotationTolerance = 1e-6;
  static constexpr double kRepairTolerance = 1e-3;

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Max abs deviation of R^T R from identity.
double orthonormality_error(const Eigen::Matrix3d& r);

/// Camera-to-world transform for a pinhole camera (x right, y down, z forward)
/// placed at `eye` and looking at `target`.
RigidTransform look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ());

struct CameraFrame {
  std::vector<float> rgb;    // H*W*3, row-major, values in [0,1]
  std::vector<float> depth;  // H*W, meters; NaN or <= 0 is invalid
  CameraIntrinsics intrinsics;
  RigidTransform extrinsic;  // camera -> robot base

  std::uint32_t width() const { return intrinsics.width; }
  std::uint32_t height() const { return intrinsics.height; }
  void validate() const;
};

struct Proprioception {
  RigidTransform ee_pose;  // end effector in robot base frame
  double gripper = 0.0;    // [0,1]
};

inline bool depth_valid(float z) { return std::isfinite(z) && z > 0.0f; }

/// Per-pixel 3D points in the camera frame with a validity mask.
struct PointMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<double> points;       // H*W*3
  std::vector<std::uint8_t> valid;  // H*W
};

PointMap deproject(const CameraFrame& frame);

/// Rows of `points` (N*3, row-major) mapped through `t` in place.
void transform_points_inplace(std::span<double> points, const RigidTransform& t);
std::vector<double> transform_points(std::span<const double> points, const RigidTransform& t);

inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

// Calibration JSON: {"fx","fy","cx","cy","width","height","extrinsic":[16 numbers, row-major camera->base]}.
struct CameraCalibration {
  CameraIntrinsics intrinsics;
  RigidTransform extrinsic;
};

CameraCalibration calibration_from_json(const nlohmann::json& j);
nlohmann::json calibration_to_json(const CameraCalibration& c);
/// Accepts a single calibration object or an array of them.
std::vector<CameraCalibration> load_calibrations(const std::string& path);
void save_calibrations(const std::string& path, const std::vector<CameraCalibration>& cams);

Proprioception proprio_from_json(const nlohmann::json& j);
nlohmann::json proprio_to_json(const Proprioception& p);

}  // namespace a3r
