#include <doctest.h>
#include <nlohmann/json.hpp>

#include <Eigen/LU>

#include <cmath>
#include <limits>

#include "adapt3r/camera_geometry.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace a3r;

namespace {

CameraFrame flat_frame(std::uint32_t w, std::uint32_t h, double fx, double fy, double cx, double cy, float depth) {
  CameraFrame f;
  f.intrinsics = {fx, fy, cx, cy, w, h};
  f.rgb.assign(static_cast<std::size_t>(w) * h * 3, 0.5f);
  f.depth.assign(static_cast<std::size_t>(w) * h, depth);
  return f;
}

Eigen::Vector3d at(const PointMap& m, std::uint32_t u, std::uint32_t v) {
  const std::size_t i = static_cast<std::size_t>(v) * m.width + u;
  return {m.points[3 * i], m.points[3 * i + 1], m.points[3 * i + 2]};
}

}  // namespace

TEST_CASE("principal point deprojects onto the optical axis") {
  CameraFrame f = flat_frame(9, 7, 123.0, 77.0, 4.0, 3.0, 2.0f);
  const PointMap m = deproject(f);
  CHECK(at(m, 4, 3) == Eigen::Vector3d(0.0, 0.0, 2.0));
}

TEST_CASE("off-axis pixel follows the pinhole formula") {
  CameraFrame f = flat_frame(200, 100, 100.0, 100.0, 50.0, 50.0, 1.0f);
  const PointMap m = deproject(f);
  const Eigen::Vector3d p = at(m, 150, 50);
  CHECK(p.x() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.y() == 0.0);
  CHECK(p.z() == 1.0);
}

TEST_CASE("invalid depth is masked, never emitted as a point") {
  CameraFrame f = flat_frame(4, 3, 10.0, 10.0, 2.0, 1.0, 1.5f);
  f.depth[0] = std::numeric_limits<float>::quiet_NaN();
  f.depth[1] = 0.0f;
  f.depth[2] = -1.0f;
  f.depth[3] = std::numeric_limits<float>::infinity();
  const PointMap m = deproject(f);
  for (int i = 0; i < 4; ++i) CHECK(m.valid[i] == 0);
  for (std::size_t i = 4; i < m.valid.size(); ++i) CHECK(m.valid[i] == 1);
}

TEST_CASE("project after deproject returns the pixel") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> depth(0.2f, 5.0f);
  CameraFrame f = flat_frame(40, 30, 57.5, 61.25, 19.3, 14.1, 1.0f);
  for (auto& z : f.depth) z = depth(rng);
  const PointMap m = deproject(f);
  for (std::uint32_t v = 0; v < 30; ++v) {
    for (std::uint32_t u = 0; u < 40; ++u) {
      const Eigen::Vector2d px = oracle::project(at(m, u, v), 57.5, 61.25, 19.3, 14.1);
      CHECK(std::abs(px.x() - u) < 1e-6);
      CHECK(std::abs(px.y() - v) < 1e-6);
    }
  }
}

TEST_CASE("transform_points basics") {
  const std::vector<double> pts = {0, 0, 0, 1, 2, 3};
  CHECK(transform_points(pts, RigidTransform::identity()) == pts);
  const auto moved = transform_points(pts, RigidTransform::from_translation({1, 0, 0}));
  CHECK(moved[0] == 1.0);
  CHECK(moved[1] == 0.0);
  CHECK(moved[2] == 0.0);
}

TEST_CASE("transform then inverse restores points and preserves distances") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const RigidTransform t = testing::random_transform(rng, 3.0);
    std::vector<double> pts(60);
    for (auto& v : pts) v = n(rng);
    const auto moved = transform_points(pts, t);
    const auto back = transform_points(moved, invert(t));
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(back[i] - pts[i]) < 1e-9);
    for (std::size_t a = 0; a < 20; ++a) {
      for (std::size_t b = a + 1; b < 20; ++b) {
        const double d0 = (Eigen::Map<const Eigen::Vector3d>(&pts[3 * a]) - Eigen::Map<const Eigen::Vector3d>(&pts[3 * b])).norm();
        const double d1 =
            (Eigen::Map<const Eigen::Vector3d>(&moved[3 * a]) - Eigen::Map<const Eigen::Vector3d>(&moved[3 * b])).norm();
        CHECK(std::abs(d0 - d1) < 1e-9);
      }
    }
  }
}

TEST_CASE("invert matches the homogeneous matrix inverse") {
  CHECK(orthonormality_error(invert(RigidTransform::identity()).rotation()) == 0.0);
  CHECK(invert(RigidTransform::identity()).translation() == Eigen::Vector3d::Zero());
  const RigidTransform tr = invert(RigidTransform::from_translation({1.5, -2.0, 0.25}));
  CHECK(tr.translation() == Eigen::Vector3d(-1.5, 2.0, -0.25));
  CHECK(tr.rotation() == Eigen::Matrix3d::Identity());

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const RigidTransform t = testing::random_transform(rng, 5.0);
    Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
    h.topLeftCorner<3, 3>() = t.rotation();
    h.topRightCorner<3, 1>() = t.translation();
    const Eigen::Matrix4d hinv = h.inverse();
    const RigidTransform inv = invert(t);
    CHECK((inv.rotation() - hinv.topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((inv.translation() - hinv.topRightCorner<3, 1>()).cwiseAbs().maxCoeff() < 1e-9);
    const RigidTransform id = inv * t;
    CHECK((id.rotation() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(id.translation().cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("composition applies the right operand first") {
  std::mt19937_64 rng(5);
  const RigidTransform a = testing::random_transform(rng);
  const RigidTransform b = testing::random_transform(rng);
  const Eigen::Vector3d x(0.3, -0.2, 0.9);
  CHECK(((a * b).apply(x) - a.apply(b.apply(x))).norm() < 1e-12);
}

TEST_CASE("rotation validation and repair") {
  Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
  bad(0, 1) = 1e-3;
  CHECK(testing::error_code_of([&] { RigidTransform(bad, Eigen::Vector3d::Zero()); }) == ErrorCode::kInvalidArgument);
  Eigen::Matrix3d reflect = Eigen::Matrix3d::Identity();
  reflect(2, 2) = -1.0;
  CHECK(testing::error_code_of([&] { RigidTransform(reflect, Eigen::Vector3d::Zero()); }) ==
        ErrorCode::kInvalidArgument);

  std::array<double, 16> m = RigidTransform::from_axis_angle({0, 0, 1}, 0.4, {1, 2, 3}).to_row_major();
  m[1] += 2e-4;  // small drift: repaired
  const RigidTransform repaired = RigidTransform::from_row_major(m);
  CHECK(orthonormality_error(repaired.rotation()) < 1e-12);
  CHECK(repaired.rotation().determinant() == doctest::Approx(1.0));
  m[1] += 5e-2;  // large drift: rejected
  CHECK(testing::error_code_of([&] { RigidTransform::from_row_major(m); }) == ErrorCode::kParse);
  std::array<double, 16> refl = RigidTransform::identity().to_row_major();
  refl[10] = -1.0;
  CHECK_THROWS_AS(RigidTransform::from_row_major(refl), Error);
}

TEST_CASE("intrinsics invariants") {
  CHECK_NOTHROW(CameraIntrinsics({10, 10, 0, 0, 4, 4}).validate());
  CHECK_THROWS_AS(CameraIntrinsics({0, 10, 1, 1, 4, 4}).validate(), Error);
  CHECK_THROWS_AS(CameraIntrinsics({10, -1, 1, 1, 4, 4}).validate(), Error);
  CHECK_THROWS_AS(CameraIntrinsics({10, 10, 4, 1, 4, 4}).validate(), Error);
  CHECK_THROWS_AS(CameraIntrinsics({10, 10, 1, -0.5, 4, 4}).validate(), Error);
}

TEST_CASE("frame shape invariants") {
  CameraFrame f = flat_frame(4, 3, 10, 10, 1, 1, 1.0f);
  f.depth.pop_back();
  CHECK(testing::error_code_of([&] { f.validate(); }) == ErrorCode::kDimension);
}

TEST_CASE("calibration JSON is strict and round-trips") {
  CameraCalibration c{{120.0, 121.0, 31.5, 24.0, 64, 48}, RigidTransform::from_axis_angle({1, 1, 0}, 0.7, {0.1, 0.2, 0.3})};
  const nlohmann::json j = calibration_to_json(c);
  const CameraCalibration back = calibration_from_json(j);
  CHECK(back.intrinsics.fx == 120.0);
  CHECK(back.intrinsics.height == 48);
  CHECK((back.extrinsic.rotation() - c.extrinsic.rotation()).cwiseAbs().maxCoeff() < 1e-15);
  nlohmann::json extra = j;
  extra["k1"] = 0.1;
  CHECK(testing::error_code_of([&] { calibration_from_json(extra); }) == ErrorCode::kParse);
  nlohmann::json missing = j;
  missing.erase("fx");
  CHECK(testing::error_code_of([&] { calibration_from_json(missing); }) == ErrorCode::kParse);
  nlohmann::json short_ext = j;
  short_ext["extrinsic"] = {1, 0, 0};
  CHECK(testing::error_code_of([&] { calibration_from_json(short_ext); }) == ErrorCode::kParse);

  testing::TempDir dir("calib");
  save_calibrations(dir / "calib.json", {c, c});
  CHECK(load_calibrations(dir / "calib.json").size() == 2);
  CHECK(testing::error_code_of([&] { load_calibrations(dir / "missing.json"); }) == ErrorCode::kIo);
}

TEST_CASE("look_at points the optical axis at the target") {
  const RigidTransform cam = look_at({0, -1, 0.8}, {0, 0, 0.05});
  const Eigen::Vector3d forward = cam.rotation().col(2);
  CHECK((forward - (Eigen::Vector3d(0, 0, 0.05) - Eigen::Vector3d(0, -1, 0.8)).normalized()).norm() < 1e-12);
  CHECK(orthonormality_error(cam.rotation()) < 1e-12);
}
