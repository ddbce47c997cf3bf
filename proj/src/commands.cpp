#include "adapt3r/commands.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <initializer_list>

#include "adapt3r/ablation.hpp"
#include "adapt3r/bench.hpp"
#include "adapt3r/error.hpp"
#include "adapt3r/experiment.hpp"
#include "adapt3r/ply.hpp"
#include "adapt3r/tensor_io.hpp"

namespace a3r {
namespace {

constexpr double kReferenceHz = 44.1;

using Json = nlohmann::json;

void check_keys(const Json& j, std::initializer_list<const char*> known, const std::string& what) {
  require(j.is_object(), ErrorCode::kParse, what + " request must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    require(ok, ErrorCode::kParse, "unknown " + what + " option \"" + key + "\"");
  }
}

template <typename T>
T get(const Json& j, const char* key, const T& fallback) {
  try {
    return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kParse, std::string("option \"") + key + "\" has the wrong type");
  }
}

std::string need_string(const Json& j, const char* key) {
  const auto v = get<std::string>(j, key, "");
  require(!v.empty(), ErrorCode::kParse, std::string("missing required option \"") + key + "\"");
  return v;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + dir);
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::kIo, "write failed: " + path);
}

Json timings_json(const StageTimings& t) {
  return {{"backbone", t.backbone}, {"deproject", t.deproject}, {"fuse", t.fuse}, {"crop", t.crop},
          {"fps", t.fps},           {"pe", t.pe},               {"pool", t.pool}};
}

Json manifest(const std::string& command) {
  return {{"version", A3R_VERSION}, {"command", command},          {"config", Json::object()},
          {"inputs", Json::object()}, {"outputs", Json::object()}, {"timings_us", Json::object()},
          {"result", Json::object()}};
}

// "config" may be an inline object or a path to a JSON file.
Json config_object(const Json& req) {
  if (!req.contains("config") || req.at("config").is_null()) return Json::object();
  const Json& c = req.at("config");
  if (c.is_string()) return read_json_file(c.get<std::string>());
  require(c.is_object(), ErrorCode::kParse, "config must be an object or a file path");
  return c;
}

// Encoder settings from a bare encoder config or from an experiment config's "encoder" member.
Json encoder_section(const Json& cfg) {
  if (!cfg.contains("encoder")) return cfg;
  check_keys(cfg, {"encoder", "policy", "train"}, "experiment config");
  const Json& e = cfg.at("encoder");
  require(e.is_object(), ErrorCode::kParse, "experiment config: \"encoder\" must be an object");
  return e;
}

std::size_t threads_of(const Json& req, std::size_t fallback) {
  const auto t = get<std::size_t>(req, "threads", fallback);
  return std::max<std::size_t>(t, 1);
}

void apply_variant_option(const Json& req, EncoderConfig& cfg) {
  const auto name = get<std::string>(req, "variant", "");
  if (name.empty()) return;
  const auto& known = variant_names();
  require(std::find(known.begin(), known.end(), name) != known.end(), ErrorCode::kParse,
          "unknown variant \"" + name + "\"");
  apply_variant(cfg, name);
}

Json cmd_encode(const Json& req) {
  check_keys(req,
             {"calib", "frames_dir", "proprio", "features_dir", "test_backbone", "lang", "config", "variant",
              "checkpoint", "out", "ply", "ply_color", "threads"},
             "encode");
  const std::string calib = need_string(req, "calib");
  const std::string frames_dir = need_string(req, "frames_dir");
  const std::string out_dir = need_string(req, "out");
  const std::string proprio = get<std::string>(req, "proprio", frames_dir + "/proprio.json");
  const std::string features_dir = get<std::string>(req, "features_dir", "");
  const bool test_backbone = get<bool>(req, "test_backbone", false);
  require(test_backbone != !features_dir.empty(), ErrorCode::kParse,
          "exactly one of features_dir and test_backbone is required");
  const std::string color = get<std::string>(req, "ply_color", "rgb");
  require(color == "rgb" || color == "pca", ErrorCode::kParse, "ply_color must be rgb or pca");

  EncoderConfig cfg = encoder_config_from_json(encoder_section(config_object(req)));
  apply_variant_option(req, cfg);
  cfg.threads = threads_of(req, cfg.threads);
  ParamStore store;
  const Adapt3rEncoder encoder(cfg, store);
  const std::string checkpoint = get<std::string>(req, "checkpoint", "");
  if (!checkpoint.empty()) store.load_checkpoint(checkpoint);

  Observation obs = load_observation(frames_dir, calib, proprio);
  obs.instruction = get<std::string>(req, "lang", "");
  require(!cfg.flags.language || !obs.instruction.empty(), ErrorCode::kParse,
          "the language flag is on but no instruction was given");
  Json inputs = {{"calib", calib}, {"frames_dir", frames_dir}, {"proprio", proprio}};
  if (!features_dir.empty()) {
    std::vector<FeatureVolume> volumes;
    for (std::size_t c = 0; c < obs.frames.size(); ++c) {
      volumes.push_back(load_feature_volume(features_dir + "/cam" + std::to_string(c) + "_features.a3rt"));
    }
    obs.features = std::move(volumes);
    inputs["features_dir"] = features_dir;
  }
  if (!checkpoint.empty()) inputs["checkpoint"] = checkpoint;

  StageTimings timings;
  const PreparedCloud prepared = encoder.prepare(obs, &timings);
  const SceneEncoding enc = encoder.encode_tokens(encoder.tokens(prepared, &timings), &timings);

  make_dir(out_dir);
  const DType dtype = cfg.precision == Precision::kF32 ? DType::kF32 : DType::kF64;
  const std::string z_path = out_dir + "/z.a3rt";
  const std::string att_path = out_dir + "/attention.a3rt";
  save_tensor(z_path, make_tensor({static_cast<std::uint32_t>(enc.z.size())},
                                  std::span<const double>(enc.z.data(), static_cast<std::size_t>(enc.z.size())), dtype));
  save_tensor(att_path,
              make_tensor({static_cast<std::uint32_t>(enc.attention.size())},
                          std::span<const double>(enc.attention.data(), static_cast<std::size_t>(enc.attention.size())),
                          dtype));
  Json m = manifest("encode");
  m["config"] = to_json(cfg);
  m["inputs"] = inputs;
  m["inputs"]["lang"] = obs.instruction;
  m["outputs"] = {{"z", z_path}, {"attention", att_path}};
  if (get<bool>(req, "ply", true)) {
    const std::string ply_path = out_dir + "/cloud.ply";
    const std::span<const double> att(enc.attention.data(), static_cast<std::size_t>(enc.attention.size()));
    write_ply(ply_path, make_ply_cloud(prepared.sampled, color == "pca" ? PlyColor::kFeaturePca : PlyColor::kRgb, att));
    m["outputs"]["ply"] = ply_path;
  }
  m["timings_us"] = timings_json(timings);
  m["result"] = {{"d_e", enc.z.size()}, {"p", enc.attention.size()}, {"valid_points", prepared.cloud.valid_count()},
                 {"cloud_rows", prepared.cloud.size()}};
  const std::string manifest_path = out_dir + "/manifest.json";
  m["outputs"]["manifest"] = manifest_path;
  write_json(manifest_path, m);
  return m;
}

Json cmd_bench(const Json& req) {
  check_keys(req, {"config", "variant", "n_iters", "warmup", "threads", "image_size", "cameras", "seed", "out"},
             "bench");
  BenchConfig bc;
  // Given keys override the bench defaults.
  Json cfg_json = to_json(bc.encoder);
  cfg_json.merge_patch(encoder_section(config_object(req)));
  bc.encoder = encoder_config_from_json(cfg_json);
  apply_variant_option(req, bc.encoder);
  bc.encoder.threads = threads_of(req, bc.encoder.threads);
  bc.iters = get<std::size_t>(req, "n_iters", bc.iters);
  bc.warmup = get<std::size_t>(req, "warmup", bc.warmup);
  bc.image_size = get<std::uint32_t>(req, "image_size", bc.image_size);
  bc.cameras = get<std::size_t>(req, "cameras", bc.cameras);
  bc.seed = get<std::uint64_t>(req, "seed", bc.seed);
  const BenchResult r = run_bench(bc);
  Json m = manifest("bench");
  m["config"] = to_json(bc.encoder);
  m["inputs"] = {{"image_size", bc.image_size}, {"cameras", bc.cameras}, {"n_iters", bc.iters},
                 {"warmup", bc.warmup},         {"seed", bc.seed}};
  m["timings_us"] = timings_json(r.mean_us);
  m["timings_us"]["backbone"] = r.backbone_us;
  m["timings_us"]["total"] = r.total_us;
  m["result"] = to_json(r);
  m["result"]["reference_hz"] = kReferenceHz;
  m["result"]["reference_note"] =
      "the reference rate includes a GPU backbone forward; total_hz excludes the backbone (see with_backbone_hz)";
  const std::string out = get<std::string>(req, "out", "");
  if (!out.empty()) {
    m["outputs"]["report"] = out;
    write_json(out, m);
  }
  return m;
}

ExperimentConfig experiment_from(const Json& req) {
  ExperimentConfig cfg = experiment_config_from_json(config_object(req));
  if (req.contains("head")) cfg.policy.head = head_kind_from_string(need_string(req, "head"));
  apply_variant_option(req, cfg.encoder);
  cfg.train.threads = threads_of(req, cfg.train.threads);
  cfg.encoder.threads = cfg.train.threads;
  return cfg;
}

Json cmd_train(const Json& req) {
  check_keys(req, {"dataset", "head", "config", "variant", "out", "threads"}, "train");
  const std::string dataset = need_string(req, "dataset");
  const std::string out_dir = need_string(req, "out");
  const ExperimentConfig cfg = experiment_from(req);
  const Dataset ds = load_dataset(dataset);
  Policy policy(cfg.encoder, cfg.policy);
  const TrainResult r = train(policy, ds, cfg.train);

  make_dir(out_dir);
  const std::string ckpt = out_dir + "/checkpoint";
  const std::string csv = out_dir + "/loss.csv";
  policy.store().save_checkpoint(ckpt);
  write_loss_csv(csv, r);
  Json m = manifest("train");
  m["config"] = to_json(cfg);
  m["inputs"] = {{"dataset", dataset}, {"episodes", ds.size()}};
  m["outputs"] = {{"checkpoint", ckpt}, {"loss_csv", csv}};
  m["result"] = {{"initial_loss", r.initial_loss}, {"final_loss", r.final_loss}, {"steps", r.steps},
                 {"epochs", r.curve.size()}};
  const std::string manifest_path = out_dir + "/manifest.json";
  m["outputs"]["manifest"] = manifest_path;
  write_json(manifest_path, m);
  return m;
}

Json cmd_ablate(const Json& req) {
  check_keys(req, {"dataset", "variants", "seeds", "config", "angles", "sweep_scenes", "out", "threads", "head"},
             "ablate");
  const std::string dataset = need_string(req, "dataset");
  const std::string out_dir = need_string(req, "out");
  const ExperimentConfig exp = experiment_from(req);
  AblationConfig cfg;
  cfg.encoder = exp.encoder;
  cfg.policy = exp.policy;
  cfg.train = exp.train;
  cfg.variants = get<std::vector<std::string>>(req, "variants", cfg.variants);
  cfg.seeds = get<std::vector<std::uint64_t>>(req, "seeds", cfg.seeds);
  cfg.angles = get<std::vector<double>>(req, "angles", cfg.angles);
  cfg.sweep_scenes = get<std::size_t>(req, "sweep_scenes", cfg.sweep_scenes);
  const auto& known = variant_names();
  for (const auto& v : cfg.variants) {
    require(std::find(known.begin(), known.end(), v) != known.end(), ErrorCode::kParse,
            "unknown variant \"" + v + "\"");
  }
  const Dataset ds = load_dataset(dataset);
  const auto rows = run_ablation(ds, cfg);

  make_dir(out_dir);
  const std::string csv = out_dir + "/ablation.csv";
  write_ablation_csv(csv, rows, cfg.angles);
  Json m = manifest("ablate");
  m["config"] = to_json(exp);
  m["inputs"] = {{"dataset", dataset},     {"variants", cfg.variants},         {"seeds", cfg.seeds},
                 {"angles", cfg.angles},   {"sweep_scenes", cfg.sweep_scenes}};
  m["outputs"] = {{"csv", csv}};
  Json table = Json::array();
  for (const auto& r : rows) {
    table.push_back({{"variant", r.variant}, {"seed", r.seed}, {"initial_loss", r.initial_loss},
                     {"final_loss", r.final_loss}, {"drift", r.drift}, {"mean_drift", r.mean_drift}});
  }
  m["result"] = {{"rows", table}};
  const std::string manifest_path = out_dir + "/manifest.json";
  m["outputs"]["manifest"] = manifest_path;
  write_json(manifest_path, m);
  return m;
}

Json cmd_make_dataset(const Json& req) {
  check_keys(req, {"out", "n", "seed", "task"}, "make-dataset");
  const std::string out_dir = need_string(req, "out");
  const auto n = get<std::size_t>(req, "n", 64);
  const auto seed = get<std::uint64_t>(req, "seed", 0);
  const ReachTaskConfig task =
      reach_task_config_from_json(req.contains("task") ? req.at("task") : Json::object());
  save_dataset(out_dir, make_reach_task(task, n, seed));
  Json m = manifest("make-dataset");
  m["config"] = to_json(task);
  m["inputs"] = {{"n", n}, {"seed", seed}};
  m["outputs"] = {{"dataset", out_dir}, {"dataset_manifest", out_dir + "/manifest.json"}};
  return m;
}

Json cmd_render(const Json& req) {
  check_keys(req, {"scene", "out"}, "render");
  const std::string scene = need_string(req, "scene");
  const std::string out_dir = need_string(req, "out");
  const SceneSpec spec = load_scene_spec(scene);
  Observation obs;
  obs.frames = render(spec);
  obs.proprio = spec.ee;
  save_observation(out_dir, obs);
  Json m = manifest("render");
  m["config"] = to_json(spec);
  m["inputs"] = {{"scene", scene}};
  m["outputs"] = {{"frames_dir", out_dir}, {"calib", out_dir + "/calib.json"}, {"proprio", out_dir + "/proprio.json"}};
  m["result"] = {{"cameras", obs.frames.size()}};
  const std::string manifest_path = out_dir + "/manifest.json";
  m["outputs"]["manifest"] = manifest_path;
  write_json(manifest_path, m);
  return m;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"encode", "bench", "train", "ablate", "make-dataset", "render"};
  return names;
}

nlohmann::json run_command(const std::string& name, const nlohmann::json& request) {
  if (name == "encode") return cmd_encode(request);
  if (name == "bench") return cmd_bench(request);
  if (name == "train") return cmd_train(request);
  if (name == "ablate") return cmd_ablate(request);
  if (name == "make-dataset") return cmd_make_dataset(request);
  if (name == "render") return cmd_render(request);
  fail(ErrorCode::kParse, "unknown command \"" + name + "\"");
}

}  // namespace a3r
