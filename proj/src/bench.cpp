#include "adapt3r/bench.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <random>

#include "adapt3r/error.hpp"
#include "adapt3r/synth_scenes.hpp"

namespace a3r {

EncoderConfig BenchConfig::default_bench_encoder() {
  EncoderConfig cfg;
  cfg.p = 512;
  cfg.d = 64;
  cfg.precision = Precision::kF32;
  cfg.backbone_stride = 4;
  return cfg;
}

namespace {

double hz(double us) { return us > 0 ? 1e6 / us : 0.0; }

Observation bench_observation(const BenchConfig& cfg) {
  require(cfg.cameras >= 1, ErrorCode::kInvalidArgument, "bench needs at least one camera");
  ReachTaskConfig task;
  task.image_size = cfg.image_size;
  task.wrist_camera = cfg.cameras >= 2;
  std::mt19937_64 rng(cfg.seed);
  Episode ep = make_reach_episode(task, rng);
  // Extra cameras orbit the scene camera about the vertical axis through the table center.
  for (std::size_t c = ep.scene.cameras.size(); c < cfg.cameras; ++c) {
    CameraCalibration cam = ep.scene.cameras.front();
    cam.extrinsic = rotation_about_vertical(Eigen::Vector3d::Zero(), 0.7 * static_cast<double>(c)) * cam.extrinsic;
    ep.scene.cameras.push_back(cam);
  }
  ep.obs.frames = render(ep.scene);
  return ep.obs;
}

}  // namespace

nlohmann::json to_json(const BenchResult& r) {
  const auto& t = r.mean_us;
  nlohmann::json stages = {{"deproject", t.deproject}, {"fuse", t.fuse}, {"crop", t.crop},
                           {"fps", t.fps},             {"pe", t.pe},     {"pool", t.pool}};
  nlohmann::json stage_hz = nlohmann::json::object();
  for (const auto& [k, v] : stages.items()) stage_hz[k] = hz(v.get<double>());
  return {{"iters", r.iters},
          {"cloud_rows", r.cloud_rows},
          {"sampled_rows", r.sampled_rows},
          {"stage_us", stages},
          {"stage_hz", stage_hz},
          {"total_us", r.total_us},
          {"total_hz", r.total_hz()},
          {"backbone_us", r.backbone_us},
          {"backbone_hz", hz(r.backbone_us)},
          {"with_backbone_hz", hz(r.total_us + r.backbone_us)}};
}

BenchResult run_bench(const BenchConfig& cfg) {
  require(cfg.iters >= 1, ErrorCode::kInvalidArgument, "bench needs at least one iteration");
  ParamStore store;
  const Adapt3rEncoder encoder(cfg.encoder, store);
  Observation obs = bench_observation(cfg);

  using clock = std::chrono::steady_clock;
  BenchResult r;
  r.iters = cfg.iters;
  {
    std::vector<FeatureVolume> volumes;
    const auto start = clock::now();
    for (std::size_t i = 0; i < cfg.iters; ++i) {
      volumes.clear();
      for (const auto& f : obs.frames) volumes.push_back(extract_features(f, encoder.backbone(), cfg.encoder.d));
    }
    r.backbone_us = std::chrono::duration<double, std::micro>(clock::now() - start).count() / cfg.iters;
    obs.features = std::move(volumes);
  }
  if (cfg.encoder.flags.language) obs.language = encoder.backbone().embed_language(obs.instruction);

  for (std::size_t i = 0; i < cfg.warmup; ++i) (void)encoder.encode(obs);

  StageTimings sum;
  double wall = 0.0;
  for (std::size_t i = 0; i < cfg.iters; ++i) {
    const auto start = clock::now();
    const PreparedCloud prepared = encoder.prepare(obs, &sum);
    const SceneEncoding enc = encoder.encode_tokens(encoder.tokens(prepared, &sum), &sum);
    wall += std::chrono::duration<double, std::micro>(clock::now() - start).count();
    if (i == 0) {
      r.cloud_rows = prepared.cloud.size();
      r.sampled_rows = prepared.sampled.size();
    }
    require(enc.z.allFinite(), ErrorCode::kNumeric, "bench produced a non-finite encoding");
  }
  const double n = static_cast<double>(cfg.iters);
  r.mean_us = {0.0, sum.deproject / n, sum.fuse / n, sum.crop / n, sum.fps / n, sum.pe / n, sum.pool / n};
  r.total_us = wall / n;
  return r;
}

}  // namespace a3r
