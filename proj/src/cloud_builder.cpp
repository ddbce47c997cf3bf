#include "adapt3r/cloud_builder.hpp"

#include <algorithm>
#include <thread>

#include "adapt3r/error.hpp"

namespace a3r {

std::size_t FeatureCloud::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::uint32_t nearest_source_pixel(std::uint32_t cell, std::uint32_t cells, std::uint32_t pixels) {
  // Cell center in pixel-index coordinates: x = ((2*cell+1)*pixels - cells) / (2*cells).
  // Nearest index with ties down: ceil(x - 1/2) = ceil(((2*cell+1)*pixels - 2*cells) / (2*cells)).
  const std::int64_t num = (2 * static_cast<std::int64_t>(cell) + 1) * pixels - 2 * static_cast<std::int64_t>(cells);
  const std::int64_t den = 2 * static_cast<std::int64_t>(cells);
  std::int64_t idx = num >= 0 ? (num + den - 1) / den : -((-num) / den);
  idx = std::clamp<std::int64_t>(idx, 0, static_cast<std::int64_t>(pixels) - 1);
  return static_cast<std::uint32_t>(idx);
}

namespace {

void fuse_camera(const PointMap& pm, const CameraFrame& frame, const FeatureVolume& vol, std::size_t row0,
                 FeatureCloud& out) {
  const auto& ext = frame.extrinsic;
  const std::size_t d = vol.d;
  std::vector<std::uint32_t> col_src(vol.w);
  for (std::uint32_t j = 0; j < vol.w; ++j) col_src[j] = nearest_source_pixel(j, vol.w, pm.width);
  for (std::uint32_t i = 0; i < vol.h; ++i) {
    const std::uint32_t v = nearest_source_pixel(i, vol.h, pm.height);
    for (std::uint32_t j = 0; j < vol.w; ++j) {
      const std::size_t src = static_cast<std::size_t>(v) * pm.width + col_src[j];
      const std::size_t cell = static_cast<std::size_t>(i) * vol.w + j;
      const std::size_t row = row0 + cell;
      std::copy_n(vol.values.begin() + static_cast<std::ptrdiff_t>(cell * d), d,
                  out.features.begin() + static_cast<std::ptrdiff_t>(row * d));
      for (int c = 0; c < 3; ++c) out.colors[3 * row + c] = frame.rgb[3 * src + c];
      if (!pm.valid[src]) continue;
      const Eigen::Vector3d p = ext.apply(Eigen::Map<const Eigen::Vector3d>(pm.points.data() + 3 * src));
      for (int c = 0; c < 3; ++c) out.points[3 * row + c] = p[c];
      out.valid[row] = 1;
    }
  }
}

template <typename Fn>
void for_each_camera(std::size_t n, std::size_t threads, Fn&& fn) {
  // Cameras touch disjoint outputs, so the parallel path is deterministic.
  const std::size_t n_workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (n_workers <= 1) {
    for (std::size_t c = 0; c < n; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t c = w; c < n; c += n_workers) fn(c);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::vector<PointMap> deproject_all(const std::vector<CameraFrame>& frames, std::size_t threads) {
  std::vector<PointMap> maps(frames.size());
  for_each_camera(frames.size(), threads, [&](std::size_t c) { maps[c] = deproject(frames[c]); });
  return maps;
}

FeatureCloud fuse_point_maps(const std::vector<PointMap>& maps, const std::vector<CameraFrame>& frames,
                             const std::vector<FeatureVolume>& volumes, std::size_t threads) {
  require(!frames.empty(), ErrorCode::kInvalidArgument, "no cameras");
  require(frames.size() == volumes.size(), ErrorCode::kDimension,
          "got " + std::to_string(frames.size()) + " frames but " + std::to_string(volumes.size()) + " feature volumes");
  require(maps.size() == frames.size(), ErrorCode::kDimension, "point map count does not match frames");
  FeatureCloud out;
  out.d = volumes.front().d;
  std::vector<std::size_t> row0;
  std::size_t m = 0;
  for (std::size_t c = 0; c < frames.size(); ++c) {
    const auto& v = volumes[c];
    v.validate();
    frames[c].validate();
    require(v.d == out.d, ErrorCode::kDimension, "feature volumes disagree on d");
    require(v.h <= frames[c].height() && v.w <= frames[c].width(), ErrorCode::kDimension,
            "feature grid larger than camera " + std::to_string(c) + " image");
    require(maps[c].width == frames[c].width() && maps[c].height == frames[c].height(), ErrorCode::kDimension,
            "point map does not match camera " + std::to_string(c));
    row0.push_back(m);
    out.cells_per_camera.push_back(static_cast<std::size_t>(v.h) * v.w);
    m += out.cells_per_camera.back();
  }
  out.points.assign(3 * m, 0.0);
  out.features.assign(m * out.d, 0.0);
  out.colors.assign(3 * m, 0.0);
  out.valid.assign(m, 0);
  out.frame = FrameTag::kBase;
  for_each_camera(frames.size(), threads,
                  [&](std::size_t c) { fuse_camera(maps[c], frames[c], volumes[c], row0[c], out); });
  return out;
}

FeatureCloud fuse(const std::vector<CameraFrame>& frames, const std::vector<FeatureVolume>& volumes,
                  std::size_t threads) {
  require(frames.size() == volumes.size(), ErrorCode::kDimension,
          "got " + std::to_string(frames.size()) + " frames but " + std::to_string(volumes.size()) + " feature volumes");
  return fuse_point_maps(deproject_all(frames, threads), frames, volumes, threads);
}

FeatureCloud to_ee_frame(const FeatureCloud& cloud, const Proprioception& proprio) {
  require(cloud.frame == FrameTag::kBase, ErrorCode::kState, "cloud is already in the end-effector frame");
  FeatureCloud out = cloud;
  transform_points_inplace(out.points, proprio.ee_pose.inverse());
  out.frame = FrameTag::kEe;
  return out;
}

void CropConfig::validate() const {
  if (world_box) {
    require((world_box->min.array() < world_box->max.array()).all(), ErrorCode::kInvalidArgument,
            "crop box min must be below max on every axis");
  }
}

std::optional<Box> world_box_preset(CropMode mode) {
  switch (mode) {
    case CropMode::kNone:
      return std::nullopt;
    case CropMode::kLoose:
      return Box{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.5}};
    case CropMode::kTight:
      return Box{{-0.5, -0.5, -0.05}, {0.5, 0.5, 0.8}};
  }
  return std::nullopt;
}

std::string to_string(CropMode mode) {
  switch (mode) {
    case CropMode::kNone:
      return "none";
    case CropMode::kLoose:
      return "loose";
    case CropMode::kTight:
      return "tight";
  }
  return "tight";
}

CropMode crop_mode_from_string(const std::string& s) {
  if (s == "none") return CropMode::kNone;
  if (s == "loose") return CropMode::kLoose;
  if (s == "tight") return CropMode::kTight;
  fail(ErrorCode::kParse, "unknown crop mode \"" + s + "\"");
}

FeatureCloud apply_crops(const FeatureCloud& cloud, const CropConfig& cfg) {
  cfg.validate();
  FeatureCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out.valid[i]) continue;
    if (out.frame == FrameTag::kBase && cfg.world_box && !cfg.world_box->contains(out.point(i))) out.valid[i] = 0;
    if (out.frame == FrameTag::kEe && cfg.ee_zmin && out.points[3 * i + 2] < *cfg.ee_zmin) out.valid[i] = 0;
  }
  return out;
}

void apply_ee_crop(FeatureCloud& cloud, const Proprioception& proprio, double ee_zmin) {
  const RigidTransform to_ee = proprio.ee_pose.inverse();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.valid[i]) continue;
    const double z = cloud.frame == FrameTag::kEe ? cloud.points[3 * i + 2] : to_ee.apply(cloud.point(i)).z();
    if (z < ee_zmin) cloud.valid[i] = 0;
  }
}

}  // namespace a3r
