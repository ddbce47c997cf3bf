#include "adapt3r/camera_geometry.hpp"

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

#include "adapt3r/error.hpp"

namespace a3r {

void CameraIntrinsics::validate() const {
  require(fx > 0.0 && fy > 0.0, ErrorCode::kInvalidArgument, "focal lengths must be positive");
  require(width > 0 && height > 0, ErrorCode::kInvalidArgument, "image size must be positive");
  require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height, ErrorCode::kInvalidArgument,
          "principal point outside the image");
}

double orthonormality_error(const Eigen::Matrix3d& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  require(rotation.allFinite() && translation.allFinite(), ErrorCode::kInvalidArgument,
          "transform has non-finite entries");
  require(orthonormality_error(rotation) <= kRotationTolerance, ErrorCode::kInvalidArgument,
          "rotation is not orthonormal");
  require(std::abs(rotation.determinant() - 1.0) <= kRotationTolerance, ErrorCode::kInvalidArgument,
          "rotation determinant is not +1");
}

RigidTransform RigidTransform::from_translation(const Eigen::Vector3d& t) {
  return RigidTransform(Eigen::Matrix3d::Identity(), t);
}

RigidTransform RigidTransform::from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                               const Eigen::Vector3d& translation) {
  return RigidTransform(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(), translation);
}

RigidTransform RigidTransform::from_row_major(std::span<const double> m) {
  require(m.size() == 16, ErrorCode::kParse, "extrinsic needs 16 numbers");
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = m[4 * i + j];
    t(i) = m[4 * i + 3];
  }
  require(m[12] == 0.0 && m[13] == 0.0 && m[14] == 0.0 && m[15] == 1.0, ErrorCode::kParse,
          "extrinsic bottom row must be [0 0 0 1]");
  require(r.allFinite() && t.allFinite(), ErrorCode::kParse, "extrinsic has non-finite entries");
  const double drift = orthonormality_error(r);
  require(drift <= kRepairTolerance, ErrorCode::kParse, "extrinsic rotation is not a rotation");
  if (drift > kRotationTolerance) {
    // Closest rotation in Frobenius norm: U V^T of the SVD.
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
  }
  require(r.determinant() > 0.0, ErrorCode::kParse, "extrinsic rotation is a reflection");
  return RigidTransform(r, t);
}

std::array<double, 16> RigidTransform::to_row_major() const {
  std::array<double, 16> m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[4 * i + j] = rotation_(i, j);
    m[4 * i + 3] = translation_(i);
  }
  m[15] = 1.0;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation_ = rotation_ * rhs.rotation_;
  out.translation_ = rotation_ * rhs.translation_ + translation_;
  return out;
}

RigidTransform look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Eigen::Vector3d::UnitY());
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return RigidTransform(r, eye);
}

void CameraFrame::validate() const {
  intrinsics.validate();
  const std::size_t n = static_cast<std::size_t>(width()) * height();
  require(depth.size() == n, ErrorCode::kDimension, "depth size does not match intrinsics");
  require(rgb.size() == 3 * n, ErrorCode::kDimension, "rgb size does not match intrinsics");
}

PointMap deproject(const CameraFrame& frame) {
  frame.validate();
  const auto& k = frame.intrinsics;
  PointMap out;
  out.width = k.width;
  out.height = k.height;
  const std::size_t n = static_cast<std::size_t>(k.width) * k.height;
  out.points.assign(3 * n, 0.0);
  out.valid.assign(n, 0);
  for (std::uint32_t v = 0; v < k.height; ++v) {
    for (std::uint32_t u = 0; u < k.width; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * k.width + u;
      const float z = frame.depth[i];
      if (!depth_valid(z)) continue;
      out.points[3 * i + 0] = (u - k.cx) * z / k.fx;
      out.points[3 * i + 1] = (v - k.cy) * z / k.fy;
      out.points[3 * i + 2] = z;
      out.valid[i] = 1;
    }
  }
  return out;
}

void transform_points_inplace(std::span<double> points, const RigidTransform& t) {
  require(points.size() % 3 == 0, ErrorCode::kDimension, "points must be N x 3");
  const Eigen::Matrix3d& r = t.rotation();
  const Eigen::Vector3d& tr = t.translation();
  for (std::size_t i = 0; i < points.size(); i += 3) {
    Eigen::Map<Eigen::Vector3d> p(points.data() + i);
    p = r * p + tr;
  }
}

std::vector<double> transform_points(std::span<const double> points, const RigidTransform& t) {
  std::vector<double> out(points.begin(), points.end());
  transform_points_inplace(out, t);
  return out;
}

namespace {

double get_number(const nlohmann::json& j, const char* key) {
  require(j.contains(key), ErrorCode::kParse, std::string("calibration is missing \"") + key + "\"");
  require(j.at(key).is_number(), ErrorCode::kParse, std::string("calibration field \"") + key + "\" is not a number");
  return j.at(key).get<double>();
}

RigidTransform transform_from_json(const nlohmann::json& j, const char* what) {
  require(j.is_array() && j.size() == 16, ErrorCode::kParse, std::string(what) + " must be 16 numbers");
  std::array<double, 16> m{};
  for (std::size_t i = 0; i < 16; ++i) {
    require(j[i].is_number(), ErrorCode::kParse, std::string(what) + " must be numeric");
    m[i] = j[i].get<double>();
  }
  return RigidTransform::from_row_major(m);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

CameraCalibration calibration_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::kParse, "calibration must be an object");
  static const std::set<std::string> known = {"fx", "fy", "cx", "cy", "width", "height", "extrinsic"};
  for (const auto& [key, _] : j.items()) {
    require(known.count(key) > 0, ErrorCode::kParse, "unknown calibration field \"" + key + "\"");
  }
  CameraCalibration c;
  c.intrinsics.fx = get_number(j, "fx");
  c.intrinsics.fy = get_number(j, "fy");
  c.intrinsics.cx = get_number(j, "cx");
  c.intrinsics.cy = get_number(j, "cy");
  const double w = get_number(j, "width");
  const double h = get_number(j, "height");
  require(w >= 1 && h >= 1 && w == std::floor(w) && h == std::floor(h), ErrorCode::kParse,
          "width/height must be positive integers");
  c.intrinsics.width = static_cast<std::uint32_t>(w);
  c.intrinsics.height = static_cast<std::uint32_t>(h);
  require(j.contains("extrinsic"), ErrorCode::kParse, "calibration is missing \"extrinsic\"");
  c.extrinsic = transform_from_json(j.at("extrinsic"), "extrinsic");
  try {
    c.intrinsics.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kParse, e.what());
  }
  return c;
}

nlohmann::json calibration_to_json(const CameraCalibration& c) {
  const auto m = c.extrinsic.to_row_major();
  return {{"fx", c.intrinsics.fx},       {"fy", c.intrinsics.fy},         {"cx", c.intrinsics.cx},
          {"cy", c.intrinsics.cy},       {"width", c.intrinsics.width}, {"height", c.intrinsics.height},
          {"extrinsic", std::vector<double>(m.begin(), m.end())}};
}

std::vector<CameraCalibration> load_calibrations(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kParse, path + ": " + e.what());
  }
  std::vector<CameraCalibration> out;
  if (j.is_array()) {
    for (const auto& c : j) out.push_back(calibration_from_json(c));
  } else {
    out.push_back(calibration_from_json(j));
  }
  require(!out.empty(), ErrorCode::kParse, path + ": no cameras");
  return out;
}

void save_calibrations(const std::string& path, const std::vector<CameraCalibration>& cams) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cams) j.push_back(calibration_to_json(c));
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << j.dump(2) << '\n';
}

Proprioception proprio_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("ee_pose"), ErrorCode::kParse, "proprioception needs \"ee_pose\"");
  for (const auto& [key, _] : j.items()) {
    require(key == "ee_pose" || key == "gripper", ErrorCode::kParse, "unknown proprioception field \"" + key + "\"");
  }
  Proprioception p;
  p.ee_pose = transform_from_json(j.at("ee_pose"), "ee_pose");
  if (j.contains("gripper")) {
    require(j.at("gripper").is_number(), ErrorCode::kParse, "gripper must be a number");
    p.gripper = j.at("gripper").get<double>();
  }
  return p;
}

nlohmann::json proprio_to_json(const Proprioception& p) {
  const auto m = p.ee_pose.to_row_major();
  return {{"ee_pose", std::vector<double>(m.begin(), m.end())}, {"gripper", p.gripper}};
}

}  // namespace a3r
