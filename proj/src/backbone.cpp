#include "adapt3r/backbone.hpp"

#include <cctype>
#include <cmath>
#include <random>

#include "adapt3r/error.hpp"
#include "adapt3r/tensor_io.hpp"

namespace a3r {

void FeatureVolume::validate() const {
  require(h > 0 && w > 0 && d > 0, ErrorCode::kShape, "feature volume has an empty dimension");
  require(values.size() == static_cast<std::size_t>(h) * w * d, ErrorCode::kShape,
          "feature volume values do not match h x w x d");
  for (double v : values) require(std::isfinite(v), ErrorCode::kNumeric, "feature volume has non-finite values");
}

FeatureVolume extract_features(const CameraFrame& frame, const Backbone& backbone, std::size_t expected_d) {
  FeatureVolume v = backbone.extract(frame);
  v.validate();
  require(v.d == expected_d, ErrorCode::kDimension,
          "backbone produced d=" + std::to_string(v.d) + ", configured d=" + std::to_string(expected_d));
  return v;
}

LanguageEmbedding embed_language(std::string_view instruction, const Backbone& backbone) {
  return backbone.embed_language(instruction);
}

FeatureVolume load_feature_volume(const std::string& path) {
  Tensor t = load_tensor(path, 3);
  FeatureVolume v;
  v.h = t.shape[0];
  v.w = t.shape[1];
  v.d = t.shape[2];
  v.values = std::move(t.values);
  v.validate();
  return v;
}

void save_feature_volume(const std::string& path, const FeatureVolume& v, bool as_f32) {
  v.validate();
  save_tensor(path, make_tensor({v.h, v.w, v.d}, v.values, as_f32 ? DType::kF32 : DType::kF64));
}

TestBackbone::TestBackbone(const TestBackboneConfig& cfg, ParamStore& store) : cfg_(cfg), store_(&store) {
  require(cfg.d > 0 && cfg.stride > 0 && cfg.hidden > 0, ErrorCode::kInvalidArgument, "bad test backbone config");
  std::mt19937_64 rng(cfg.seed ^ 0x6261636b626f6e65ULL);
  spec_ = add_mlp(store, "backbone", {3 * cfg.stride * cfg.stride, cfg.hidden, cfg.d}, rng);
  store.set_trainable("backbone.", false);
}

MatD TestBackbone::patches(const CameraFrame& frame, std::uint32_t& h, std::uint32_t& w) const {
  frame.validate();
  const auto s = static_cast<std::uint32_t>(cfg_.stride);
  h = frame.height() / s;
  w = frame.width() / s;
  require(h > 0 && w > 0, ErrorCode::kDimension, "image smaller than the backbone stride");
  MatD x(static_cast<Eigen::Index>(h) * w, 3 * s * s);
  for (std::uint32_t i = 0; i < h; ++i) {
    for (std::uint32_t j = 0; j < w; ++j) {
      const Eigen::Index row = static_cast<Eigen::Index>(i) * w + j;
      Eigen::Index col = 0;
      for (std::uint32_t dv = 0; dv < s; ++dv) {
        for (std::uint32_t du = 0; du < s; ++du) {
          const std::size_t pix = static_cast<std::size_t>(i * s + dv) * frame.width() + (j * s + du);
          for (int c = 0; c < 3; ++c) x(row, col++) = frame.rgb[3 * pix + c];
        }
      }
    }
  }
  return x;
}

FeatureVolume TestBackbone::extract(const CameraFrame& frame) const {
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  const MatD x = patches(frame, h, w);
  const MatD y = mlp_forward(load_mlp<double>(*store_, spec_), x);
  FeatureVolume v;
  v.h = h;
  v.w = w;
  v.d = static_cast<std::uint32_t>(cfg_.d);
  v.values.resize(static_cast<std::size_t>(y.size()));
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    for (Eigen::Index c = 0; c < y.cols(); ++c) v.values[static_cast<std::size_t>(r * y.cols() + c)] = y(r, c);
  }
  return v;
}

void TestBackbone::backward(const CameraFrame& frame, const FeatureVolume& dfeatures, std::span<double> grad) const {
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  const MatD x = patches(frame, h, w);
  require(dfeatures.h == h && dfeatures.w == w && dfeatures.d == cfg_.d, ErrorCode::kDimension,
          "feature gradient shape mismatch");
  const auto weights = load_mlp<double>(*store_, spec_);
  MlpCache<double> cache;
  mlp_forward(weights, x, &cache);
  MatD dy(x.rows(), static_cast<Eigen::Index>(cfg_.d));
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    for (Eigen::Index c = 0; c < dy.cols(); ++c) dy(r, c) = dfeatures.values[static_cast<std::size_t>(r * dy.cols() + c)];
  }
  mlp_backward(weights, spec_, *store_, cache, dy, grad);
}

LanguageEmbedding TestBackbone::embed_language(std::string_view instruction) const {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : instruction) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  require(!tokens.empty(), ErrorCode::kInvalidArgument, "empty language instruction");

  std::vector<double> v(cfg_.d, 0.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    // FNV-1a over the token, mixed with the backbone seed and token position.
    std::uint64_t hsh = 1469598103934665603ULL ^ cfg_.seed;
    for (char c : tokens[t]) {
      hsh ^= static_cast<unsigned char>(c);
      hsh *= 1099511628211ULL;
    }
    std::mt19937_64 rng(hsh);
    const double weight = 1.0 / (1.0 + 0.25 * static_cast<double>(t));
    for (auto& x : v) x += weight * normal(rng);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return {std::move(v)};
}

}  // namespace a3r
