#include "adapt3r/synth_scenes.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "adapt3r/error.hpp"
#include "adapt3r/tensor_io.hpp"

namespace a3r {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinT = 1e-9;

}  // namespace

Primitive Primitive::sphere(const Eigen::Vector3d& c, double r, const Eigen::Vector3d& albedo) {
  Primitive p;
  p.kind = Kind::kSphere;
  p.center = c;
  p.radius = r;
  p.albedo = albedo;
  return p;
}

Primitive Primitive::box(const Eigen::Vector3d& c, const Eigen::Vector3d& half, const Eigen::Vector3d& albedo) {
  Primitive p;
  p.kind = Kind::kBox;
  p.center = c;
  p.half_extents = half;
  p.albedo = albedo;
  return p;
}

Primitive Primitive::plane(double z, const Eigen::Vector3d& albedo) {
  Primitive p;
  p.kind = Kind::kPlane;
  p.plane_z = z;
  p.albedo = albedo;
  return p;
}

double Primitive::intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d) const {
  switch (kind) {
    case Kind::kSphere: {
      const Eigen::Vector3d oc = o - center;
      const double a = d.squaredNorm();
      const double b = oc.dot(d);
      const double c = oc.squaredNorm() - radius * radius;
      const double disc = b * b - a * c;
      if (disc < 0.0) return kInf;
      const double sq = std::sqrt(disc);
      // Numerically stable pair of roots.
      const double q = b >= 0.0 ? -(b + sq) : -(b - sq);
      double t0 = q / a;
      double t1 = q != 0.0 ? c / q : t0;
      if (t0 > t1) std::swap(t0, t1);
      if (t0 > kMinT) return t0;
      if (t1 > kMinT) return t1;
      return kInf;
    }
    case Kind::kBox: {
      double tmin = -kInf;
      double tmax = kInf;
      for (int i = 0; i < 3; ++i) {
        const double lo = center[i] - half_extents[i];
        const double hi = center[i] + half_extents[i];
        if (d[i] == 0.0) {
          if (o[i] < lo || o[i] > hi) return kInf;
          continue;
        }
        double t0 = (lo - o[i]) / d[i];
        double t1 = (hi - o[i]) / d[i];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
      }
      if (tmin > tmax) return kInf;
      if (tmin > kMinT) return tmin;
      if (tmax > kMinT) return tmax;
      return kInf;
    }
    case Kind::kPlane: {
      if (d.z() == 0.0) return kInf;
      const double t = (plane_z - o.z()) / d.z();
      return t > kMinT ? t : kInf;
    }
  }
  return kInf;
}

double Primitive::surface_distance(const Eigen::Vector3d& p) const {
  switch (kind) {
    case Kind::kSphere:
      return std::abs((p - center).norm() - radius);
    case Kind::kBox: {
      const Eigen::Vector3d q = (p - center).cwiseAbs() - half_extents;
      const double outside = q.cwiseMax(0.0).norm();
      const double inside = std::min(q.maxCoeff(), 0.0);
      return std::abs(outside + inside);
    }
    case Kind::kPlane:
      return std::abs(p.z() - plane_z);
  }
  return kInf;
}

void SceneSpec::validate() const {
  require(!cameras.empty(), ErrorCode::kInvalidArgument, "scene needs at least one camera");
  for (const auto& c : cameras) c.intrinsics.validate();
  for (const auto& p : primitives) {
    require(p.center.allFinite() && p.albedo.allFinite() && std::isfinite(p.plane_z), ErrorCode::kInvalidArgument,
            "primitive has non-finite parameters");
    if (p.kind == Primitive::Kind::kSphere) require(p.radius > 0, ErrorCode::kInvalidArgument, "sphere radius <= 0");
    if (p.kind == Primitive::Kind::kBox) {
      require((p.half_extents.array() > 0).all(), ErrorCode::kInvalidArgument, "box extents must be positive");
    }
  }
  require(depth_noise_sigma >= 0.0, ErrorCode::kInvalidArgument, "depth noise sigma must be >= 0");
}

std::vector<CameraFrame> render(const SceneSpec& spec) {
  spec.validate();
  std::vector<CameraFrame> frames;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.depth_noise_sigma > 0 ? spec.depth_noise_sigma : 1.0);
  for (const auto& cam : spec.cameras) {
    const auto& k = cam.intrinsics;
    CameraFrame f;
    f.intrinsics = k;
    f.extrinsic = cam.extrinsic;
    const std::size_t n = static_cast<std::size_t>(k.width) * k.height;
    f.rgb.assign(3 * n, 0.0f);
    f.depth.assign(n, std::numeric_limits<float>::quiet_NaN());
    const Eigen::Vector3d origin = cam.extrinsic.translation();
    const Eigen::Matrix3d& r = cam.extrinsic.rotation();
    for (std::uint32_t v = 0; v < k.height; ++v) {
      for (std::uint32_t u = 0; u < k.width; ++u) {
        const Eigen::Vector3d dir = r * Eigen::Vector3d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        double best = kInf;
        const Primitive* hit = nullptr;
        for (const auto& p : spec.primitives) {
          const double t = p.intersect(origin, dir);
          if (t < best) {
            best = t;
            hit = &p;
          }
        }
        if (!hit) continue;
        const std::size_t i = static_cast<std::size_t>(v) * k.width + u;
        double depth = best;
        if (spec.depth_noise_sigma > 0) depth += noise(rng);
        if (depth <= 0) continue;
        f.depth[i] = static_cast<float>(depth);
        for (int c = 0; c < 3; ++c) f.rgb[3 * i + c] = static_cast<float>(hit->albedo[c]);
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

double scene_surface_distance(const SceneSpec& spec, const Eigen::Vector3d& p) {
  double best = kInf;
  for (const auto& prim : spec.primitives) best = std::min(best, prim.surface_distance(p));
  return best;
}

namespace {

nlohmann::json vec3(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec3_from(const nlohmann::json& j, const char* what) {
  require(j.is_array() && j.size() == 3, ErrorCode::kParse, std::string(what) + " must have 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << text;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kParse, path + ": " + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const SceneSpec& spec) {
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& p : spec.primitives) {
    switch (p.kind) {
      case Primitive::Kind::kSphere:
        prims.push_back({{"type", "sphere"}, {"center", vec3(p.center)}, {"radius", p.radius}, {"albedo", vec3(p.albedo)}});
        break;
      case Primitive::Kind::kBox:
        prims.push_back({{"type", "box"},
                         {"center", vec3(p.center)},
                         {"half_extents", vec3(p.half_extents)},
                         {"albedo", vec3(p.albedo)}});
        break;
      case Primitive::Kind::kPlane:
        prims.push_back({{"type", "plane"}, {"z", p.plane_z}, {"albedo", vec3(p.albedo)}});
        break;
    }
  }
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : spec.cameras) cams.push_back(calibration_to_json(c));
  const auto proprio = proprio_to_json(spec.ee);
  return {{"primitives", prims},
          {"cameras", cams},
          {"ee_pose", proprio.at("ee_pose")},
          {"gripper", spec.ee.gripper},
          {"seed", spec.seed},
          {"depth_noise_sigma", spec.depth_noise_sigma}};
}

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    require(j.is_object(), ErrorCode::kParse, "scene spec must be an object");
    for (const auto& p : j.at("primitives")) {
      const auto type = p.at("type").get<std::string>();
      const Eigen::Vector3d albedo = p.contains("albedo") ? vec3_from(p.at("albedo"), "albedo") : Eigen::Vector3d(0.5, 0.5, 0.5);
      if (type == "sphere") {
        s.primitives.push_back(Primitive::sphere(vec3_from(p.at("center"), "center"), p.at("radius").get<double>(), albedo));
      } else if (type == "box") {
        s.primitives.push_back(
            Primitive::box(vec3_from(p.at("center"), "center"), vec3_from(p.at("half_extents"), "half_extents"), albedo));
      } else if (type == "plane") {
        s.primitives.push_back(Primitive::plane(p.at("z").get<double>(), albedo));
      } else {
        fail(ErrorCode::kParse, "unknown primitive type \"" + type + "\"");
      }
    }
    for (const auto& c : j.at("cameras")) s.cameras.push_back(calibration_from_json(c));
    nlohmann::json proprio = {{"ee_pose", j.at("ee_pose")}};
    if (j.contains("gripper")) proprio["gripper"] = j.at("gripper");
    s.ee = proprio_from_json(proprio);
    s.seed = j.value("seed", std::uint64_t{0});
    s.depth_noise_sigma = j.value("depth_noise_sigma", 0.0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("scene spec: ") + e.what());
  }
  try {
    s.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kParse, e.what());
  }
  return s;
}

SceneSpec load_scene_spec(const std::string& path) { return scene_spec_from_json(read_json(path)); }

void save_scene_spec(const std::string& path, const SceneSpec& spec) { write_text(path, to_json(spec).dump(2) + "\n"); }

RigidTransform rotation_about_vertical(const Eigen::Vector3d& pivot, double angle) {
  const RigidTransform rot = RigidTransform::from_axis_angle(Eigen::Vector3d::UnitZ(), angle);
  return RigidTransform::from_translation(pivot) * rot * RigidTransform::from_translation(-pivot);
}

ActionChunk expert_chunk(const Eigen::Vector3d& ee, const Eigen::Vector3d& target, std::size_t horizon, double step) {
  ActionChunk chunk;
  chunk.horizon = horizon;
  chunk.action_dim = 4;
  chunk.actions.reserve(4 * horizon);
  Eigen::Vector3d pos = ee;
  for (std::size_t k = 0; k < horizon; ++k) {
    const Eigen::Vector3d delta = target - pos;
    const double dist = delta.norm();
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    if (dist > 0.0) a = delta / std::max(dist, step);
    pos += step * a;
    for (int c = 0; c < 3; ++c) chunk.actions.push_back(a[c]);
    chunk.actions.push_back(dist <= step ? 1.0 : 0.0);
  }
  return chunk;
}

Episode make_reach_episode(const ReachTaskConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Episode ep;
  SceneSpec& s = ep.scene;
  s.seed = rng();
  s.primitives.push_back(Primitive::plane(-0.75, {0.3, 0.3, 0.32}));
  s.primitives.push_back(Primitive::box({0.0, 0.0, -0.025}, {0.5, 0.5, 0.025}, {0.62, 0.52, 0.38}));

  const double r = cfg.sphere_radius;
  Eigen::Vector3d red;
  Eigen::Vector3d blue;
  do {
    red = {uniform(-0.3, 0.3), uniform(-0.3, 0.3), r};
    blue = {uniform(-0.3, 0.3), uniform(-0.3, 0.3), r};
  } while ((red - blue).norm() < 0.2);
  s.primitives.push_back(Primitive::sphere(red, r, {0.9, 0.1, 0.1}));
  s.primitives.push_back(Primitive::sphere(blue, r, {0.1, 0.2, 0.9}));

  // Gripper pointing down: EE +z maps to world -z.
  const Eigen::Vector3d ee_pos(uniform(-0.25, 0.25), uniform(-0.25, 0.25), uniform(0.2, 0.35));
  s.ee.ee_pose = RigidTransform::from_axis_angle(Eigen::Vector3d::UnitX(), std::numbers::pi, ee_pos);
  s.ee.gripper = 0.0;
  // Arm link rising from the EE; rigidly attached, so it is fixed in the EE frame.
  s.primitives.push_back(Primitive::box(ee_pos + Eigen::Vector3d(0, 0, 0.27), {0.03, 0.03, 0.25}, {0.2, 0.2, 0.22}));

  const double size = cfg.image_size;
  CameraIntrinsics scene_k{size, size, size / 2.0, size / 2.0, cfg.image_size, cfg.image_size};
  s.cameras.push_back({scene_k, look_at({0.0, -1.0, 0.8}, {0.0, 0.0, 0.05})});
  if (cfg.wrist_camera) {
    CameraIntrinsics wrist_k = scene_k;
    wrist_k.fx = wrist_k.fy = 0.6 * cfg.image_size;
    // Camera z along EE z, offset behind the fingers.
    const RigidTransform mount = RigidTransform::from_translation({0.0, 0.05, -0.05});
    s.cameras.push_back({wrist_k, s.ee.ee_pose * mount});
  }

  const bool pick_red = unit(rng) < 0.5;
  ep.target = pick_red ? red : blue;
  ep.obs.instruction = pick_red ? "reach red sphere" : "reach blue sphere";
  ep.obs.frames = render(s);
  ep.obs.proprio = s.ee;
  ep.actions = expert_chunk(ee_pos, ep.target, cfg.horizon, cfg.step);
  ep.scene_camera = 0;
  return ep;
}

Dataset make_reach_task(const ReachTaskConfig& cfg, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::kInvalidArgument, "reach task needs n >= 1 episodes");
  std::mt19937_64 rng(seed);
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) ds.episodes.push_back(make_reach_episode(cfg, rng));
  return ds;
}

Observation rotate_scene_camera(const Episode& ep, double angle) {
  SceneSpec s = ep.scene;
  auto& cam = s.cameras.at(ep.scene_camera);
  cam.extrinsic = rotation_about_vertical(ep.scene.ee.ee_pose.translation(), angle) * cam.extrinsic;
  Observation obs = ep.obs;
  obs.frames = render(s);
  obs.features.reset();
  return obs;
}

void save_observation(const std::string& dir, const Observation& obs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + dir);
  std::vector<CameraCalibration> calib;
  for (std::size_t c = 0; c < obs.frames.size(); ++c) {
    const auto& f = obs.frames[c];
    save_tensor(dir + "/cam" + std::to_string(c) + "_rgb.a3rt", make_tensor({f.height(), f.width(), 3}, f.rgb));
    save_tensor(dir + "/cam" + std::to_string(c) + "_depth.a3rt", make_tensor({f.height(), f.width()}, f.depth));
    calib.push_back({f.intrinsics, f.extrinsic});
  }
  save_calibrations(dir + "/calib.json", calib);
  write_text(dir + "/proprio.json", proprio_to_json(obs.proprio).dump(2) + "\n");
}

Observation load_observation(const std::string& frames_dir, const std::string& calib_path,
                             const std::string& proprio_path) {
  Observation obs;
  const auto calib = load_calibrations(calib_path);
  for (std::size_t c = 0; c < calib.size(); ++c) {
    const Tensor rgb = load_tensor(frames_dir + "/cam" + std::to_string(c) + "_rgb.a3rt", 3);
    const Tensor depth = load_tensor(frames_dir + "/cam" + std::to_string(c) + "_depth.a3rt", 2);
    const auto& k = calib[c].intrinsics;
    require(rgb.shape[0] == k.height && rgb.shape[1] == k.width && rgb.shape[2] == 3, ErrorCode::kDimension,
            "camera " + std::to_string(c) + " rgb shape does not match its calibration");
    require(depth.shape[0] == k.height && depth.shape[1] == k.width, ErrorCode::kDimension,
            "camera " + std::to_string(c) + " depth shape does not match its calibration");
    CameraFrame f;
    f.intrinsics = k;
    f.extrinsic = calib[c].extrinsic;
    f.rgb.assign(rgb.values.begin(), rgb.values.end());
    f.depth.assign(depth.values.begin(), depth.values.end());
    obs.frames.push_back(std::move(f));
  }
  obs.proprio = proprio_from_json(read_json(proprio_path));
  return obs;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + dir);
  nlohmann::json manifest;
  manifest["format"] = "a3r-dataset";
  manifest["version"] = 1;
  auto& eps = manifest["episodes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& ep = ds.episodes[i];
    char name[32];
    std::snprintf(name, sizeof(name), "ep%05zu", i);
    const std::string sub = dir + "/" + name;
    save_observation(sub, ep.obs);
    save_scene_spec(sub + "/scene.json", ep.scene);
    save_tensor(sub + "/actions.a3rt",
                make_tensor({static_cast<std::uint32_t>(ep.actions.horizon), static_cast<std::uint32_t>(ep.actions.action_dim)},
                            ep.actions.actions));
    eps.push_back({{"dir", name},
                   {"instruction", ep.obs.instruction},
                   {"scene_camera", ep.scene_camera},
                   {"target", vec3(ep.target)},
                   {"cameras", ep.obs.frames.size()}});
  }
  write_text(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  const nlohmann::json manifest = read_json(dir + "/manifest.json");
  Dataset ds;
  try {
    require(manifest.value("format", "") == "a3r-dataset", ErrorCode::kParse, dir + ": not a dataset manifest");
    for (const auto& e : manifest.at("episodes")) {
      const std::string sub = dir + "/" + e.at("dir").get<std::string>();
      Episode ep;
      ep.obs = load_observation(sub, sub + "/calib.json", sub + "/proprio.json");
      ep.obs.instruction = e.at("instruction").get<std::string>();
      ep.scene = load_scene_spec(sub + "/scene.json");
      ep.scene_camera = e.value("scene_camera", std::size_t{0});
      ep.target = vec3_from(e.at("target"), "target");
      const Tensor a = load_tensor(sub + "/actions.a3rt", 2);
      ep.actions.horizon = a.shape[0];
      ep.actions.action_dim = a.shape[1];
      ep.actions.actions = a.values;
      ep.actions.validate();
      ds.episodes.push_back(std::move(ep));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, dir + "/manifest.json: " + e.what());
  }
  require(ds.size() > 0, ErrorCode::kInvalidArgument, dir + ": dataset is empty");
  return ds;
}

}  // namespace a3r
