#include <doctest.h>

#include <cmath>

#include "adapt3r/cloud_builder.hpp"
#include "adapt3r/synth_scenes.hpp"
#include "support/helpers.hpp"

using namespace a3r;

namespace {

CameraFrame flat_frame(std::uint32_t w, std::uint32_t h, const RigidTransform& ext, float depth = 1.0f) {
  CameraFrame f;
  f.intrinsics = {20.0, 20.0, w / 2.0, h / 2.0, w, h};
  f.extrinsic = ext;
  f.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < f.rgb.size(); ++i) f.rgb[i] = static_cast<float>(i % 97) / 97.0f;
  f.depth.assign(static_cast<std::size_t>(w) * h, depth);
  return f;
}

FeatureVolume counting_volume(std::uint32_t h, std::uint32_t w, std::uint32_t d, double offset) {
  FeatureVolume v{h, w, d, std::vector<double>(static_cast<std::size_t>(h) * w * d)};
  for (std::size_t i = 0; i < v.values.size(); ++i) v.values[i] = offset + static_cast<double>(i);
  return v;
}

/// Brute-force nearest pixel center to a cell center, integer-scaled, ties to the smaller index.
std::uint32_t nearest_by_search(std::uint32_t cell, std::uint32_t cells, std::uint32_t pixels) {
  std::uint32_t best = 0;
  std::int64_t best_gap = -1;
  for (std::uint32_t p = 0; p < pixels; ++p) {
    const std::int64_t gap = std::llabs(static_cast<std::int64_t>(2 * p + 1) * cells -
                                        static_cast<std::int64_t>(2 * cell + 1) * pixels);
    if (best_gap < 0 || gap < best_gap) {
      best_gap = gap;
      best = p;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("nearest source pixel matches exhaustive search") {
  for (std::uint32_t pixels = 1; pixels <= 40; ++pixels) {
    for (std::uint32_t cells = 1; cells <= pixels; ++cells) {
      for (std::uint32_t c = 0; c < cells; ++c) {
        CHECK(nearest_source_pixel(c, cells, pixels) == nearest_by_search(c, cells, pixels));
      }
    }
  }
  CHECK(nearest_source_pixel(0, 2, 4) == 0);
  CHECK(nearest_source_pixel(1, 2, 4) == 2);
  CHECK(nearest_source_pixel(0, 1, 4) == 1);
}

TEST_CASE("two 7x7 volumes fuse to 98 rows, camera-major") {
  std::mt19937_64 rng(3);
  const std::vector<CameraFrame> frames{flat_frame(14, 14, testing::random_transform(rng)),
                                        flat_frame(14, 14, testing::random_transform(rng))};
  const std::vector<FeatureVolume> vols{counting_volume(7, 7, 4, 0.0), counting_volume(7, 7, 4, 1000.0)};
  const FeatureCloud cloud = fuse(frames, vols);
  REQUIRE(cloud.size() == 98);
  CHECK(cloud.d == 4);
  CHECK(cloud.valid_count() == 98);
  CHECK(cloud.frame == FrameTag::kBase);
  CHECK(cloud.cells_per_camera == std::vector<std::size_t>{49, 49});
  CHECK(cloud.features[0] == 0.0);
  CHECK(cloud.features[49 * 4] == 1000.0);

  for (std::size_t c = 0; c < 2; ++c) {
    const PointMap pm = deproject(frames[c]);
    for (std::uint32_t i = 0; i < 7; ++i) {
      for (std::uint32_t j = 0; j < 7; ++j) {
        const std::size_t row = c * 49 + i * 7 + j;
        const std::size_t src = static_cast<std::size_t>(nearest_by_search(i, 7, 14)) * 14 + nearest_by_search(j, 7, 14);
        const Eigen::Vector3d expect =
            frames[c].extrinsic.apply({pm.points[3 * src], pm.points[3 * src + 1], pm.points[3 * src + 2]});
        CHECK((cloud.point(row) - expect).norm() < 1e-12);
        CHECK(cloud.colors[3 * row] == doctest::Approx(frames[c].rgb[3 * src]));
      }
    }
  }
}

TEST_CASE("invalid depth keeps its slot but is marked invalid") {
  CameraFrame f = flat_frame(8, 8, RigidTransform::identity());
  for (std::size_t i = 0; i < 8; ++i) f.depth[i] = std::nanf("");
  f.depth[9] = 0.0f;
  const FeatureCloud cloud = fuse({f}, {counting_volume(8, 8, 2, 0.0)});
  CHECK(cloud.size() == 64);
  CHECK(cloud.valid_count() == 64 - 9);
  for (std::size_t i = 0; i < 8; ++i) CHECK(cloud.valid[i] == 0);
  CHECK(cloud.valid[9] == 0);
}

TEST_CASE("fuse rejects inconsistent inputs") {
  const CameraFrame f = flat_frame(8, 8, RigidTransform::identity());
  CHECK(testing::error_code_of([&] { fuse({f}, {}); }) == ErrorCode::kDimension);
  CHECK(testing::error_code_of([&] { fuse({}, {}); }) == ErrorCode::kInvalidArgument);
  CHECK(testing::error_code_of([&] { fuse({f, f}, {counting_volume(4, 4, 2, 0), counting_volume(4, 4, 3, 0)}); }) ==
        ErrorCode::kDimension);
  CHECK(testing::error_code_of([&] { fuse({f}, {counting_volume(9, 4, 2, 0)}); }) == ErrorCode::kDimension);
}

TEST_CASE("end-effector frame change") {
  std::mt19937_64 rng(11);
  const FeatureCloud base = fuse({flat_frame(6, 6, testing::random_transform(rng))}, {counting_volume(3, 3, 2, 0)});

  SUBCASE("identity pose leaves coordinates unchanged") {
    const FeatureCloud ee = to_ee_frame(base, {RigidTransform::identity(), 0.0});
    CHECK(ee.frame == FrameTag::kEe);
    CHECK(ee.points == base.points);
    CHECK(ee.features == base.features);
  }
  SUBCASE("pure translation subtracts the EE position") {
    const FeatureCloud ee = to_ee_frame(base, {RigidTransform::from_translation({0.1, -0.2, 0.3}), 0.0});
    for (std::size_t i = 0; i < ee.size(); ++i) {
      CHECK((ee.point(i) - (base.point(i) - Eigen::Vector3d(0.1, -0.2, 0.3))).norm() < 1e-12);
    }
  }
  SUBCASE("general pose applies the inverse and cannot be applied twice") {
    const Proprioception pr{testing::random_transform(rng), 0.5};
    const FeatureCloud ee = to_ee_frame(base, pr);
    for (std::size_t i = 0; i < ee.size(); ++i) {
      CHECK((pr.ee_pose.apply(ee.point(i)) - base.point(i)).norm() < 1e-12);
    }
    CHECK(testing::error_code_of([&] { to_ee_frame(ee, pr); }) == ErrorCode::kState);
  }
}

TEST_CASE("world crop and EE crop invalidate rows without removing them") {
  std::mt19937_64 rng(5);
  FeatureCloud cloud;
  cloud.d = 1;
  const std::size_t m = 500;
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (std::size_t i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) cloud.points.push_back(u(rng));
    cloud.features.push_back(static_cast<double>(i));
    cloud.colors.insert(cloud.colors.end(), {0.0, 0.0, 0.0});
    cloud.valid.push_back(1);
  }
  cloud.cells_per_camera = {m};

  const CropConfig loose{world_box_preset(CropMode::kLoose), std::nullopt, CropMode::kLoose};
  const CropConfig tight{world_box_preset(CropMode::kTight), std::nullopt, CropMode::kTight};
  const FeatureCloud a = apply_crops(cloud, loose);
  const FeatureCloud b = apply_crops(cloud, tight);
  CHECK(a.size() == m);
  CHECK(b.size() == m);
  CHECK(b.valid_count() < a.valid_count());
  for (std::size_t i = 0; i < m; ++i) {
    if (b.valid[i]) CHECK(a.valid[i] == 1);
    CHECK(a.valid[i] == (loose.world_box->contains(cloud.point(i)) ? 1 : 0));
  }
  CHECK(!world_box_preset(CropMode::kNone).has_value());

  const Proprioception pr{RigidTransform::from_axis_angle(Eigen::Vector3d::UnitX(), std::numbers::pi, {0, 0, 0.5}), 0.0};
  FeatureCloud ee_cropped = cloud;
  apply_ee_crop(ee_cropped, pr, 0.0);
  const FeatureCloud in_ee = apply_crops(to_ee_frame(cloud, pr), {std::nullopt, 0.0, CropMode::kNone});
  CHECK(ee_cropped.valid == in_ee.valid);
  for (std::size_t i = 0; i < m; ++i) {
    // Flipped about x and lifted 0.5 m: EE z >= 0 means base z <= 0.5.
    CHECK(ee_cropped.valid[i] == (cloud.points[3 * i + 2] <= 0.5 ? 1 : 0));
  }

  CHECK(crop_mode_from_string(to_string(CropMode::kTight)) == CropMode::kTight);
  CHECK(testing::error_code_of([] { crop_mode_from_string("snug"); }) == ErrorCode::kParse);
  const CropConfig bad{Box{{0, 0, 0}, {0, 1, 1}}, std::nullopt, CropMode::kTight};
  CHECK(testing::error_code_of([&] { bad.validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("two cameras on a sphere fuse onto its surface") {
  SceneSpec s;
  s.primitives.push_back(Primitive::sphere({0.1, -0.05, 0.3}, 0.2, {0.8, 0.1, 0.1}));
  const CameraIntrinsics k{60.0, 60.0, 32.0, 32.0, 64, 64};
  s.cameras.push_back({k, look_at({0.0, -1.0, 0.8}, {0.1, -0.05, 0.3})});
  s.cameras.push_back({k, look_at({0.9, 0.4, 0.6}, {0.1, -0.05, 0.3})});
  const auto frames = render(s);
  const FeatureCloud cloud = fuse(frames, {counting_volume(64, 64, 1, 0), counting_volume(64, 64, 1, 0)});
  REQUIRE(cloud.valid_count() > 500);
  double worst = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.valid[i]) worst = std::max(worst, s.primitives[0].surface_distance(cloud.point(i)));
  }
  CHECK(worst < 1e-4);
}
