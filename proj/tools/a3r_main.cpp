// Command-line front end; every command goes through the C API.
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "adapt3r/adapt3r.h"

namespace {

using Json = nlohmann::json;

struct EncoderOverrides {
  std::optional<std::size_t> p, d, d_e, d_k, pe_frequencies, stride;
  std::optional<std::string> crop_mode, precision;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* cmd) {
    cmd->add_option("--p", p, "Points kept by FPS");
    cmd->add_option("--d", d, "Feature channels");
    cmd->add_option("--d-e", d_e, "Embedding width");
    cmd->add_option("--d-k", d_k, "Key width");
    cmd->add_option("--pe-frequencies", pe_frequencies, "Positional-encoding frequencies L");
    cmd->add_option("--backbone-stride", stride, "Test-backbone patch stride");
    cmd->add_option("--crop-mode", crop_mode, "World crop preset")->check(CLI::IsMember({"none", "loose", "tight"}));
    cmd->add_option("--precision", precision, "Inference precision")->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--seed", seed, "Parameter seed");
  }

  void apply(Json& enc) const {
    if (p) enc["p"] = *p;
    if (d) enc["d"] = *d;
    if (d_e) enc["d_e"] = *d_e;
    if (d_k) enc["d_k"] = *d_k;
    if (pe_frequencies) enc["pe_frequencies"] = *pe_frequencies;
    if (stride) enc["backbone_stride"] = *stride;
    if (crop_mode) enc["crop_mode"] = *crop_mode;
    if (precision) enc["precision"] = *precision;
    if (seed) enc["seed"] = *seed;
  }
};

struct TrainOverrides {
  std::optional<double> lr;
  std::optional<std::size_t> epochs, max_steps, batch;

  void add(CLI::App* cmd) {
    cmd->add_option("--lr", lr, "Peak learning rate");
    cmd->add_option("--epochs", epochs, "Epochs");
    cmd->add_option("--max-steps", max_steps, "Optimizer step cap (0 = epochs)");
    cmd->add_option("--batch", batch, "Batch size");
  }

  void apply(Json& exp, const EncoderOverrides& enc) const {
    if (!exp.contains("encoder")) exp["encoder"] = Json::object();
    if (!exp.contains("train")) exp["train"] = Json::object();
    if (!exp.contains("policy")) exp["policy"] = Json::object();
    enc.apply(exp["encoder"]);
    if (enc.seed) {
      exp["train"]["seed"] = *enc.seed;
      exp["policy"]["seed"] = *enc.seed;
    }
    if (lr) exp["train"]["lr"] = *lr;
    if (epochs) exp["train"]["epochs"] = *epochs;
    if (max_steps) exp["train"]["max_steps"] = *max_steps;
    if (batch) exp["train"]["batch"] = *batch;
  }
};

// Reads --config into a JSON object; I/O and syntax failures exit with the C API's codes.
Json read_config(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in.good()) {
    std::cerr << "error: cannot open " << path << '\n';
    std::exit(a3r_exit_code(A3R_ERR_IO));
  }
  try {
    Json j = Json::parse(in);
    if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
    return j;
  } catch (const std::exception& e) {
    std::cerr << "error: " << path << ": " << e.what() << '\n';
    std::exit(a3r_exit_code(A3R_ERR_PARSE));
  }
}

int run(const std::string& command, const Json& request, bool quiet) {
  char* manifest = nullptr;
  const a3r_status s = a3r_run(command.c_str(), request.dump().c_str(), &manifest);
  if (s != A3R_OK) {
    std::cerr << "error (" << a3r_status_string(s) << "): " << a3r_last_error() << '\n';
    return a3r_exit_code(s);
  }
  if (!quiet) std::cout << manifest << '\n';
  a3r_free_string(manifest);
  return 0;
}

std::size_t default_threads() {
  if (const char* env = std::getenv("A3R_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid A3R_THREADS=\"" << env << "\"\n";
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adapt3r: end-effector-centric point-cloud observation encoder"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(a3r_version()));
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Do not print the run manifest");
  std::size_t threads = default_threads();
  Json request = Json::object();
  std::string command;
  std::string config_path;

  EncoderOverrides enc_over;
  TrainOverrides train_over;

  // encode
  auto* encode = app.add_subcommand("encode", "Encode one observation to z, attention weights and a PLY cloud");
  std::string calib, frames_dir, proprio, features_dir, lang, checkpoint, out, ply_color = "rgb", variant;
  bool test_backbone = false, no_ply = false;
  encode->add_option("--calib", calib, "Calibration JSON (object or array, one per camera)")->required();
  encode->add_option("--frames-dir", frames_dir, "Directory with cam<i>_rgb.a3rt and cam<i>_depth.a3rt")->required();
  encode->add_option("--proprio", proprio, "Proprioception JSON (default: <frames-dir>/proprio.json)");
  auto* feat_opt = encode->add_option("--features-dir", features_dir, "Directory with cam<i>_features.a3rt");
  auto* tb_opt = encode->add_flag("--test-backbone", test_backbone, "Compute features with the built-in backbone");
  feat_opt->excludes(tb_opt);
  encode->add_option("--lang", lang, "Language instruction");
  encode->add_option("--config", config_path, "Encoder config JSON");
  encode->add_option("--variant", variant, "Ablation variant applied on top of the config");
  encode->add_option("--checkpoint", checkpoint, "Parameter checkpoint directory");
  encode->add_option("--out", out, "Output directory")->required();
  encode->add_flag("--no-ply", no_ply, "Skip the PLY dump");
  encode->add_option("--ply-color", ply_color, "PLY colors")->check(CLI::IsMember({"rgb", "pca"}));
  encode->add_option("--threads", threads, "Worker threads (default: A3R_THREADS or 1)");
  enc_over.add(encode);
  encode->callback([&] {
    command = "encode";
    Json cfg = read_config(config_path);
    enc_over.apply(cfg.contains("encoder") ? cfg["encoder"] : cfg);
    request = {{"calib", calib}, {"frames_dir", frames_dir}, {"out", out}, {"config", cfg},
               {"ply", !no_ply},  {"ply_color", ply_color},   {"threads", threads}, {"test_backbone", test_backbone}};
    if (!proprio.empty()) request["proprio"] = proprio;
    if (!features_dir.empty()) request["features_dir"] = features_dir;
    if (!lang.empty()) request["lang"] = lang;
    if (!checkpoint.empty()) request["checkpoint"] = checkpoint;
    if (!variant.empty()) request["variant"] = variant;
  });

  // bench
  auto* bench = app.add_subcommand("bench", "Time the core pipeline on synthetic input");
  std::size_t n_iters = 50, warmup = 3, cameras = 2;
  std::uint32_t image_size = 128;
  std::string bench_out;
  bench->add_option("--config", config_path, "Encoder config JSON (default: p=512, d=64, f32)");
  bench->add_option("--variant", variant, "Ablation variant");
  bench->add_option("--n-iters", n_iters, "Timed iterations");
  bench->add_option("--warmup", warmup, "Untimed warm-up iterations");
  bench->add_option("--threads", threads, "Worker threads (default: A3R_THREADS or 1)");
  bench->add_option("--image-size", image_size, "Square image size");
  bench->add_option("--cameras", cameras, "Camera count");
  bench->add_option("--out", bench_out, "Write the report JSON here");
  enc_over.add(bench);
  bench->callback([&] {
    command = "bench";
    Json cfg = read_config(config_path);
    if (!cfg.empty()) {
      enc_over.apply(cfg.contains("encoder") ? cfg["encoder"] : cfg);
    } else {
      Json defaults = {{"p", 512}, {"d", 64}, {"precision", "f32"}, {"backbone_stride", 4}};
      enc_over.apply(defaults);
      cfg = defaults;
    }
    request = {{"config", cfg},   {"n_iters", n_iters},     {"warmup", warmup},
               {"threads", threads}, {"image_size", image_size}, {"cameras", cameras}};
    if (!variant.empty()) request["variant"] = variant;
    if (!bench_out.empty()) request["out"] = bench_out;
  });

  // train
  auto* train = app.add_subcommand("train", "Train the encoder with a toy decoder head");
  std::string dataset, head;
  train->add_option("--dataset", dataset, "Dataset directory")->required();
  train->add_option("--head", head, "Decoder head: nll, diffusion or cvae");
  train->add_option("--config", config_path, "Experiment JSON with encoder/policy/train members");
  train->add_option("--variant", variant, "Ablation variant");
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--threads", threads, "Worker threads (default: A3R_THREADS or 1)");
  enc_over.add(train);
  train_over.add(train);
  train->callback([&] {
    command = "train";
    Json cfg = read_config(config_path);
    train_over.apply(cfg, enc_over);
    request = {{"dataset", dataset}, {"config", cfg}, {"out", out}, {"threads", threads}};
    if (!head.empty()) request["head"] = head;
    if (!variant.empty()) request["variant"] = variant;
  });

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train every ablation variant and measure camera-sweep drift");
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<double> angles;
  std::size_t sweep_scenes = 20;
  ablate->add_option("--dataset", dataset, "Dataset directory")->required();
  ablate->add_option("--variants", variants, "Variant names (default: all)")->delimiter(',');
  ablate->add_option("--seeds", seeds, "Seeds (default: 0)")->delimiter(',');
  ablate->add_option("--angles", angles, "Camera rotation angles in radians")->delimiter(',');
  ablate->add_option("--sweep-scenes", sweep_scenes, "Episodes used for the camera sweep");
  ablate->add_option("--head", head, "Decoder head: nll, diffusion or cvae");
  ablate->add_option("--config", config_path, "Experiment JSON with encoder/policy/train members");
  ablate->add_option("--out", out, "Output directory")->required();
  ablate->add_option("--threads", threads, "Worker threads (default: A3R_THREADS or 1)");
  enc_over.add(ablate);
  train_over.add(ablate);
  ablate->callback([&] {
    command = "ablate";
    Json cfg = read_config(config_path);
    train_over.apply(cfg, enc_over);
    request = {{"dataset", dataset}, {"config", cfg}, {"out", out}, {"threads", threads}, {"sweep_scenes", sweep_scenes}};
    if (!variants.empty()) request["variants"] = variants;
    if (!seeds.empty()) request["seeds"] = seeds;
    if (!angles.empty()) request["angles"] = angles;
    if (!head.empty()) request["head"] = head;
  });

  // make-dataset
  auto* make = app.add_subcommand("make-dataset", "Generate the synthetic reach dataset");
  std::size_t n_episodes = 64;
  std::uint64_t data_seed = 0;
  std::size_t horizon = 8;
  bool no_wrist = false;
  std::uint32_t data_image = 64;
  make->add_option("--out", out, "Output directory")->required();
  make->add_option("--episodes", n_episodes, "Episode count");
  make->add_option("--seed", data_seed, "Scene seed");
  make->add_option("--image-size", data_image, "Square image size");
  make->add_option("--horizon", horizon, "Action chunk length");
  make->add_flag("--no-wrist-camera", no_wrist, "Scene camera only");
  make->callback([&] {
    command = "make-dataset";
    request = {{"out", out},
               {"n", n_episodes},
               {"seed", data_seed},
               {"task", {{"image_size", data_image}, {"horizon", horizon}, {"wrist_camera", !no_wrist}}}};
  });

  // render
  auto* render = app.add_subcommand("render", "Ray-cast a scene JSON into encode inputs");
  std::string scene;
  render->add_option("--scene", scene, "Scene JSON")->required();
  render->add_option("--out", out, "Output directory")->required();
  render->callback([&] {
    command = "render";
    request = {{"scene", scene}, {"out", out}};
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return a3r_exit_code(A3R_ERR_PARSE);
  }
  return run(command, request, quiet);
}
