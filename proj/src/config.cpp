#include "adapt3r/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

#include "adapt3r/error.hpp"

namespace a3r {

std::size_t EncoderConfig::feature_block_width() const {
  if (flags.rgb_cloud) return 3;
  return flags.image_features ? d : 0;
}

CropConfig EncoderConfig::crop_config() const {
  CropConfig c;
  c.mode = crop_mode;
  c.world_box = world_box ? world_box : world_box_preset(crop_mode);
  if (flags.ee_crop) c.ee_zmin = ee_zmin;
  return c;
}

void EncoderConfig::validate() const {
  require(d >= 1 && d_e >= 1 && d_k >= 1, ErrorCode::kInvalidArgument, "encoder dims must be positive");
  require(p >= 1, ErrorCode::kInvalidArgument, "p must be >= 1");
  require(pe_frequencies >= 1, ErrorCode::kInvalidArgument, "pe_frequencies must be >= 1");
  require(backbone_stride >= 1 && backbone_hidden >= 1, ErrorCode::kInvalidArgument, "bad backbone config");
  crop_config().validate();
}

namespace {

std::string to_string(Pooling p) { return p == Pooling::kAttention ? "attention" : "max"; }

nlohmann::json box_to_json(const Box& b) {
  return {{"min", {b.min.x(), b.min.y(), b.min.z()}}, {"max", {b.max.x(), b.max.y(), b.max.z()}}};
}

Box box_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("min") && j.contains("max") && j.size() == 2, ErrorCode::kParse,
          "world_box needs exactly \"min\" and \"max\"");
  Box b;
  for (int i = 0; i < 3; ++i) {
    b.min[i] = j.at("min").at(static_cast<std::size_t>(i)).get<double>();
    b.max[i] = j.at("max").at(static_cast<std::size_t>(i)).get<double>();
  }
  return b;
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& what) {
  require(j.is_object(), ErrorCode::kParse, what + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    require(known.count(key) > 0, ErrorCode::kParse, "unknown " + what + " key \"" + key + "\"");
  }
}

}  // namespace

nlohmann::json to_json(const EncoderConfig& c) {
  nlohmann::json flags = {{"ee_frame", c.flags.ee_frame},
                          {"ee_crop", c.flags.ee_crop},
                          {"image_features", c.flags.image_features},
                          {"rgb_cloud", c.flags.rgb_cloud},
                          {"language", c.flags.language},
                          {"positional_encoding", c.flags.positional_encoding},
                          {"fps_metric", to_string(c.flags.fps_metric)},
                          {"pooling", to_string(c.flags.pooling)}};
  nlohmann::json j = {{"d", c.d},
                      {"d_e", c.d_e},
                      {"d_k", c.d_k},
                      {"p", c.p},
                      {"pe_frequencies", c.pe_frequencies},
                      {"crop_mode", to_string(c.crop_mode)},
                      {"ee_zmin", c.ee_zmin},
                      {"flags", flags},
                      {"use_proprio", c.use_proprio},
                      {"finetune_backbone", c.finetune_backbone},
                      {"random_fps_start", c.random_fps_start},
                      {"backbone_stride", c.backbone_stride},
                      {"backbone_hidden", c.backbone_hidden},
                      {"seed", c.seed},
                      {"precision", c.precision == Precision::kF32 ? "f32" : "f64"},
                      {"threads", c.threads}};
  if (c.world_box) j["world_box"] = box_to_json(*c.world_box);
  return j;
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    check_keys(j,
               {"d", "d_e", "d_k", "p", "pe_frequencies", "crop_mode", "world_box", "ee_zmin", "flags", "use_proprio",
                "finetune_backbone", "random_fps_start", "backbone_stride", "backbone_hidden", "seed", "precision",
                "threads"},
               "encoder config");
    c.d = j.value("d", c.d);
    c.d_e = j.value("d_e", c.d_e);
    c.d_k = j.value("d_k", c.d_k);
    c.p = j.value("p", c.p);
    c.pe_frequencies = j.value("pe_frequencies", c.pe_frequencies);
    if (j.contains("crop_mode")) c.crop_mode = crop_mode_from_string(j.at("crop_mode").get<std::string>());
    if (j.contains("world_box") && !j.at("world_box").is_null()) c.world_box = box_from_json(j.at("world_box"));
    c.ee_zmin = j.value("ee_zmin", c.ee_zmin);
    c.use_proprio = j.value("use_proprio", c.use_proprio);
    c.finetune_backbone = j.value("finetune_backbone", c.finetune_backbone);
    c.random_fps_start = j.value("random_fps_start", c.random_fps_start);
    c.backbone_stride = j.value("backbone_stride", c.backbone_stride);
    c.backbone_hidden = j.value("backbone_hidden", c.backbone_hidden);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("precision")) {
      const auto s = j.at("precision").get<std::string>();
      require(s == "f32" || s == "f64", ErrorCode::kParse, "precision must be f32 or f64");
      c.precision = s == "f32" ? Precision::kF32 : Precision::kF64;
    }
    if (j.contains("flags")) {
      const auto& f = j.at("flags");
      check_keys(f,
                 {"ee_frame", "ee_crop", "image_features", "rgb_cloud", "language", "positional_encoding",
                  "fps_metric", "pooling"},
                 "flags");
      c.flags.ee_frame = f.value("ee_frame", c.flags.ee_frame);
      c.flags.ee_crop = f.value("ee_crop", c.flags.ee_crop);
      c.flags.image_features = f.value("image_features", c.flags.image_features);
      c.flags.rgb_cloud = f.value("rgb_cloud", c.flags.rgb_cloud);
      c.flags.language = f.value("language", c.flags.language);
      c.flags.positional_encoding = f.value("positional_encoding", c.flags.positional_encoding);
      if (f.contains("fps_metric")) c.flags.fps_metric = fps_metric_from_string(f.at("fps_metric").get<std::string>());
      if (f.contains("pooling")) {
        const auto s = f.at("pooling").get<std::string>();
        require(s == "attention" || s == "max", ErrorCode::kParse, "pooling must be attention or max");
        c.flags.pooling = s == "attention" ? Pooling::kAttention : Pooling::kMax;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("encoder config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kParse, e.what());
  }
  return c;
}

EncoderConfig load_encoder_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  try {
    return encoder_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kParse, path + ": " + e.what());
  }
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"full",   "no-eecf", "no-ee-crop",   "no-image-features", "rgb-cloud",
                                                 "no-lang", "no-pe",   "position-fps", "no-attention"};
  return names;
}

void apply_variant(EncoderConfig& cfg, const std::string& name) {
  auto& f = cfg.flags;
  if (name == "full") {
    f = AblationFlags{};
  } else if (name == "no-eecf") {
    f.ee_frame = false;
  } else if (name == "no-ee-crop") {
    f.ee_crop = false;
  } else if (name == "no-image-features") {
    f.image_features = false;
    f.rgb_cloud = false;
  } else if (name == "rgb-cloud") {
    f.rgb_cloud = true;
  } else if (name == "no-lang") {
    f.language = false;
  } else if (name == "no-pe") {
    f.positional_encoding = false;
  } else if (name == "position-fps") {
    f.fps_metric = FpsMetric::kPosition;
  } else if (name == "no-attention") {
    f.pooling = Pooling::kMax;
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown variant \"" + name + "\"");
  }
}

}  // namespace a3r
