#include "adapt3r/adapt3r.h"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_set>

#include "adapt3r/commands.hpp"
#include "adapt3r/error.hpp"
#include "adapt3r/pipeline.hpp"

struct a3r_encoder {
  a3r::ParamStore store;
  std::unique_ptr<a3r::Adapt3rEncoder> encoder;
  std::optional<a3r::MatD> tokens;  // from the last encode
  std::optional<a3r::MatD> token_grad;
  std::vector<std::string> names;
  std::atomic<bool> busy{false};
};

namespace {

thread_local std::string g_last_error;

std::mutex g_registry_mutex;
std::unordered_set<const a3r_encoder*>& registry() {
  static std::unordered_set<const a3r_encoder*> live;
  return live;
}

bool is_live(const a3r_encoder* h) {
  std::lock_guard<std::mutex> lock(g_registry_mutex);
  return registry().count(h) != 0;
}

a3r_status status_of(a3r::ErrorCode c) {
  switch (c) {
    case a3r::ErrorCode::kParse:
      return A3R_ERR_PARSE;
    case a3r::ErrorCode::kDimension:
      return A3R_ERR_DIMENSION;
    case a3r::ErrorCode::kIo:
      return A3R_ERR_IO;
    case a3r::ErrorCode::kInvalidArgument:
      return A3R_ERR_INVALID_ARGUMENT;
    case a3r::ErrorCode::kBadMagic:
      return A3R_ERR_BAD_MAGIC;
    case a3r::ErrorCode::kDType:
      return A3R_ERR_DTYPE;
    case a3r::ErrorCode::kTruncated:
      return A3R_ERR_TRUNCATED;
    case a3r::ErrorCode::kShape:
      return A3R_ERR_SHAPE;
    case a3r::ErrorCode::kNumeric:
      return A3R_ERR_NUMERIC;
    case a3r::ErrorCode::kState:
      return A3R_ERR_STATE;
  }
  return A3R_ERR_INTERNAL;
}

a3r_status set_error(a3r_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename Fn>
a3r_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return A3R_OK;
  } catch (const a3r::Error& e) {
    return set_error(status_of(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(A3R_ERR_PARSE, e.what());
  } catch (const std::exception& e) {
    return set_error(A3R_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(A3R_ERR_INTERNAL, "unknown failure");
  }
}

// Runs fn on a leased handle, reporting invalid and busy handles with their own statuses.
template <typename Fn>
a3r_status with_handle(const a3r_encoder* h, Fn&& fn) {
  if (h == nullptr || !is_live(h)) return set_error(A3R_ERR_INVALID_HANDLE, "invalid or destroyed encoder handle");
  bool expected = false;
  auto* mut = const_cast<a3r_encoder*>(h);
  if (!mut->busy.compare_exchange_strong(expected, true)) {
    return set_error(A3R_ERR_BUSY, "encoder handle is already in use by another call");
  }
  const a3r_status s = guarded([&] { fn(*mut); });
  mut->busy.store(false);
  return s;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  a3r::require(out != nullptr, a3r::ErrorCode::kState, "out of memory");
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

a3r::Observation observation_from_view(const a3r_observation_view& v, std::size_t d) {
  using a3r::ErrorCode;
  using a3r::require;
  require(v.n_cameras >= 1 && v.cameras != nullptr, ErrorCode::kInvalidArgument, "cameras: at least one camera needed");
  require(v.ee_pose != nullptr, ErrorCode::kInvalidArgument, "ee_pose: missing");
  a3r::Observation obs;
  obs.proprio.ee_pose = a3r::RigidTransform::from_row_major(std::span<const double, 16>(v.ee_pose, 16));
  obs.proprio.gripper = v.gripper;
  if (v.instruction) obs.instruction = v.instruction;
  std::size_t with_features = 0;
  for (std::size_t c = 0; c < v.n_cameras; ++c) with_features += v.cameras[c].features != nullptr;
  require(with_features == 0 || with_features == v.n_cameras, ErrorCode::kInvalidArgument,
          "features: give a volume for every camera or for none");
  if (with_features) obs.features.emplace();
  for (std::size_t c = 0; c < v.n_cameras; ++c) {
    const a3r_camera_view& cam = v.cameras[c];
    const std::string where = "cameras[" + std::to_string(c) + "]";
    require(cam.rgb && cam.depth && cam.extrinsic, ErrorCode::kInvalidArgument, where + ": rgb, depth and extrinsic are required");
    a3r::CameraFrame f;
    f.intrinsics = {cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height};
    f.intrinsics.validate();
    const std::size_t n = static_cast<std::size_t>(cam.width) * cam.height;
    f.rgb.assign(cam.rgb, cam.rgb + 3 * n);
    f.depth.assign(cam.depth, cam.depth + n);
    f.extrinsic = a3r::RigidTransform::from_row_major(std::span<const double, 16>(cam.extrinsic, 16));
    f.validate();
    obs.frames.push_back(std::move(f));
    if (with_features) {
      require(cam.feature_d == d, ErrorCode::kDimension,
              where + " features: d=" + std::to_string(cam.feature_d) + " but the encoder expects d=" + std::to_string(d));
      a3r::FeatureVolume vol;
      vol.h = cam.feature_h;
      vol.w = cam.feature_w;
      vol.d = cam.feature_d;
      vol.values.assign(cam.features, cam.features + static_cast<std::size_t>(vol.h) * vol.w * vol.d);
      obs.features->push_back(std::move(vol));
    }
  }
  if (v.language) {
    require(v.language_dim == d, ErrorCode::kDimension,
            "language: length " + std::to_string(v.language_dim) + " but the encoder expects " + std::to_string(d));
    obs.language = a3r::LanguageEmbedding{std::vector<double>(v.language, v.language + v.language_dim)};
  }
  return obs;
}

void check_param(const a3r_encoder& h, std::size_t index, std::size_t len, bool check_len) {
  a3r::require(index < h.store.params().size(), a3r::ErrorCode::kInvalidArgument,
               "parameter index " + std::to_string(index) + " out of range");
  if (check_len) {
    const std::size_t size = h.store.params()[index].size;
    a3r::require(len == size, a3r::ErrorCode::kDimension,
                 "buffer has " + std::to_string(len) + " entries, parameter has " + std::to_string(size));
  }
}

}  // namespace

extern "C" {

const char* a3r_version(void) { return A3R_VERSION; }

const char* a3r_status_string(a3r_status s) {
  switch (s) {
    case A3R_OK:
      return "ok";
    case A3R_ERR_PARSE:
      return "parse error";
    case A3R_ERR_DIMENSION:
      return "dimension mismatch";
    case A3R_ERR_IO:
      return "I/O error";
    case A3R_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case A3R_ERR_BAD_MAGIC:
      return "bad magic";
    case A3R_ERR_DTYPE:
      return "unsupported dtype";
    case A3R_ERR_TRUNCATED:
      return "truncated payload";
    case A3R_ERR_SHAPE:
      return "shape mismatch";
    case A3R_ERR_NUMERIC:
      return "numeric failure";
    case A3R_ERR_STATE:
      return "invalid state";
    case A3R_ERR_INVALID_HANDLE:
      return "invalid handle";
    case A3R_ERR_BUSY:
      return "handle busy";
    case A3R_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* a3r_last_error(void) { return g_last_error.c_str(); }

int a3r_exit_code(a3r_status s) {
  switch (s) {
    case A3R_OK:
      return 0;
    case A3R_ERR_PARSE:
    case A3R_ERR_INVALID_ARGUMENT:
    case A3R_ERR_BAD_MAGIC:
    case A3R_ERR_DTYPE:
    case A3R_ERR_TRUNCATED:
      return 1;
    case A3R_ERR_DIMENSION:
    case A3R_ERR_SHAPE:
      return 2;
    case A3R_ERR_IO:
      return 3;
    case A3R_ERR_NUMERIC:
      return 4;
    default:
      return 5;
  }
}

a3r_status a3r_encoder_create(const char* config_json, a3r_encoder** out) {
  if (out == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "out pointer is NULL");
  *out = nullptr;
  return guarded([&] {
    a3r::EncoderConfig cfg;
    if (config_json != nullptr && config_json[0] != '\0') {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(config_json);
      } catch (const nlohmann::json::parse_error& e) {
        a3r::fail(a3r::ErrorCode::kParse, std::string("config: ") + e.what());
      }
      cfg = a3r::encoder_config_from_json(j);
    }
    auto h = std::make_unique<a3r_encoder>();
    h->encoder = std::make_unique<a3r::Adapt3rEncoder>(cfg, h->store);
    for (const auto& p : h->store.params()) h->names.push_back(p.name);
    {
      std::lock_guard<std::mutex> lock(g_registry_mutex);
      registry().insert(h.get());
    }
    *out = h.release();
  });
}

void a3r_encoder_destroy(a3r_encoder* enc) {
  if (enc == nullptr) return;
  {
    std::lock_guard<std::mutex> lock(g_registry_mutex);
    if (registry().erase(enc) == 0) return;
  }
  delete enc;
}

a3r_status a3r_encoder_config(const a3r_encoder* enc, char** out_json) {
  if (out_json == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "out pointer is NULL");
  return with_handle(enc, [&](a3r_encoder& h) { *out_json = dup_string(a3r::to_json(h.encoder->config()).dump()); });
}

a3r_status a3r_encoder_dims(const a3r_encoder* enc, size_t* d, size_t* d_e, size_t* p, size_t* token_width) {
  return with_handle(enc, [&](a3r_encoder& h) {
    const auto& c = h.encoder->config();
    if (d) *d = c.d;
    if (d_e) *d_e = c.d_e;
    if (p) *p = c.p;
    if (token_width) *token_width = c.token_width();
  });
}

a3r_status a3r_encoder_save_checkpoint(const a3r_encoder* enc, const char* dir) {
  if (dir == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "dir is NULL");
  return with_handle(enc, [&](a3r_encoder& h) { h.store.save_checkpoint(dir); });
}

a3r_status a3r_encoder_load_checkpoint(a3r_encoder* enc, const char* dir) {
  if (dir == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "dir is NULL");
  return with_handle(enc, [&](a3r_encoder& h) {
    h.store.load_checkpoint(dir);
    h.tokens.reset();
    h.token_grad.reset();
  });
}

a3r_status a3r_encode(a3r_encoder* enc, const a3r_observation_view* obs, double* z, size_t z_len, double* attention,
                      size_t attention_len) {
  if (obs == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "observation is NULL");
  return with_handle(enc, [&](a3r_encoder& h) {
    const auto& cfg = h.encoder->config();
    a3r::require(z == nullptr || z_len == cfg.d_e, a3r::ErrorCode::kDimension,
                 "z: buffer has " + std::to_string(z_len) + " entries, d_e=" + std::to_string(cfg.d_e));
    a3r::require(attention == nullptr || attention_len == cfg.p, a3r::ErrorCode::kDimension,
                 "attention: buffer has " + std::to_string(attention_len) + " entries, p=" + std::to_string(cfg.p));
    const a3r::Observation o = observation_from_view(*obs, cfg.d);
    h.tokens.reset();
    h.token_grad.reset();
    const a3r::PreparedCloud prepared = h.encoder->prepare(o);
    a3r::MatD tokens = h.encoder->tokens(prepared);
    const a3r::SceneEncoding e = h.encoder->encode_tokens(tokens);
    if (z) std::copy(e.z.data(), e.z.data() + e.z.size(), z);
    if (attention) std::copy(e.attention.data(), e.attention.data() + e.attention.size(), attention);
    h.tokens = std::move(tokens);
  });
}

a3r_status a3r_grad_z(a3r_encoder* enc, const double* upstream, size_t len) {
  if (upstream == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "upstream is NULL");
  return with_handle(enc, [&](a3r_encoder& h) {
    a3r::require(h.tokens.has_value(), a3r::ErrorCode::kState, "grad_z called before encode");
    const auto& cfg = h.encoder->config();
    a3r::require(len == cfg.d_e, a3r::ErrorCode::kDimension,
                 "upstream: " + std::to_string(len) + " entries, d_e=" + std::to_string(cfg.d_e));
    const auto w = a3r::load_pool<double>(h.store, h.encoder->pool_spec());
    a3r::PoolCache cache;
    (void)h.encoder->forward(*h.tokens, w, cache);
    h.store.zero_grad();
    const a3r::VecD dz = Eigen::Map<const a3r::VecD>(upstream, static_cast<Eigen::Index>(len));
    h.token_grad = h.encoder->backward(w, cache, dz, h.store.grads());
  });
}

a3r_status a3r_param_count(const a3r_encoder* enc, size_t* count) {
  if (count == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "count is NULL");
  return with_handle(enc, [&](a3r_encoder& h) { *count = h.store.params().size(); });
}

a3r_status a3r_param_info(const a3r_encoder* enc, size_t index, const char** name, size_t* numel, int* trainable) {
  return with_handle(enc, [&](a3r_encoder& h) {
    check_param(h, index, 0, false);
    const auto& p = h.store.params()[index];
    if (name) *name = h.names[index].c_str();
    if (numel) *numel = p.size;
    if (trainable) *trainable = p.trainable ? 1 : 0;
  });
}

a3r_status a3r_param_value(const a3r_encoder* enc, size_t index, double* out, size_t len) {
  if (out == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "out is NULL");
  return with_handle(enc, [&](a3r_encoder& h) {
    check_param(h, index, len, true);
    const auto v = h.store.value(a3r::ParamId{index});
    std::copy(v.begin(), v.end(), out);
  });
}

a3r_status a3r_param_set_value(a3r_encoder* enc, size_t index, const double* values, size_t len) {
  if (values == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "values is NULL");
  return with_handle(enc, [&](a3r_encoder& h) {
    check_param(h, index, len, true);
    auto v = h.store.value(a3r::ParamId{index});
    std::copy(values, values + len, v.begin());
    h.token_grad.reset();
  });
}

a3r_status a3r_param_grad(const a3r_encoder* enc, size_t index, double* out, size_t len) {
  if (out == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "out is NULL");
  return with_handle(enc, [&](a3r_encoder& h) {
    a3r::require(h.token_grad.has_value(), a3r::ErrorCode::kState, "no gradients: call a3r_grad_z first");
    check_param(h, index, len, true);
    const auto g = h.store.grad(a3r::ParamId{index});
    std::copy(g.begin(), g.end(), out);
  });
}

a3r_status a3r_token_grad(const a3r_encoder* enc, double* out, size_t len) {
  if (out == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "out is NULL");
  return with_handle(enc, [&](a3r_encoder& h) {
    a3r::require(h.token_grad.has_value(), a3r::ErrorCode::kState, "no gradients: call a3r_grad_z first");
    const a3r::MatD& g = *h.token_grad;
    a3r::require(len == static_cast<std::size_t>(g.size()), a3r::ErrorCode::kDimension,
                 "token gradient has " + std::to_string(g.size()) + " entries");
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) out[r * g.cols() + c] = g(r, c);
    }
  });
}

a3r_status a3r_run(const char* command, const char* request_json, char** manifest_json) {
  if (command == nullptr) return set_error(A3R_ERR_INVALID_ARGUMENT, "command is NULL");
  if (manifest_json) *manifest_json = nullptr;
  return guarded([&] {
    nlohmann::json req = nlohmann::json::object();
    if (request_json != nullptr && request_json[0] != '\0') {
      try {
        req = nlohmann::json::parse(request_json);
      } catch (const nlohmann::json::parse_error& e) {
        a3r::fail(a3r::ErrorCode::kParse, std::string("request: ") + e.what());
      }
    }
    const nlohmann::json m = a3r::run_command(command, req);
    if (manifest_json) *manifest_json = dup_string(m.dump(2));
  });
}

void a3r_free_string(char* s) { std::free(s); }

}  // extern "C"
