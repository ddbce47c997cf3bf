#include "adapt3r/encoder.hpp"

#include <cmath>
#include <numbers>

#include "adapt3r/error.hpp"

namespace a3r {

std::vector<double> positional_encode(std::span<const double> points, const PositionalEncodingConfig& cfg) {
  require(points.size() % 3 == 0, ErrorCode::kDimension, "positional_encode expects N x 3 points");
  require(cfg.frequencies >= 1, ErrorCode::kInvalidArgument, "positional encoding needs L >= 1");
  const std::size_t n = points.size() / 3;
  const std::size_t width = cfg.out_dim();
  std::vector<double> out(n * width);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * width;
    for (std::size_t c = 0; c < 3; ++c) {
      const double x = points[3 * i + c];
      for (std::size_t f = 0; f < cfg.frequencies; ++f) {
        const double arg = std::ldexp(std::numbers::pi * x, static_cast<int>(f));
        row[c * 2 * cfg.frequencies + 2 * f] = std::sin(arg);
        row[c * 2 * cfg.frequencies + 2 * f + 1] = std::cos(arg);
      }
    }
  }
  return out;
}

TokenLayout token_layout(const EncoderConfig& cfg) {
  return {cfg.position_width(), cfg.feature_block_width(), cfg.language_width()};
}

MatD assemble_tokens(std::span<const double> positions, std::size_t position_width, std::span<const double> features,
                     std::size_t feature_width, std::span<const double> language, std::size_t rows) {
  require(positions.size() == rows * position_width, ErrorCode::kDimension, "position block does not match p");
  require(features.size() == rows * feature_width, ErrorCode::kDimension, "feature block does not match p x d");
  const std::size_t width = position_width + feature_width + language.size();
  MatD tokens(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < position_width; ++k) tokens(i, col++) = positions[i * position_width + k];
    for (std::size_t k = 0; k < feature_width; ++k) tokens(i, col++) = features[i * feature_width + k];
    for (double v : language) tokens(i, col++) = v;
  }
  return tokens;
}

MatD build_tokens(const DownsampledCloud& cloud, const LanguageEmbedding& lang, const EncoderConfig& cfg) {
  const std::size_t p = cloud.size();
  const TokenLayout layout = token_layout(cfg);
  std::vector<double> pos = cfg.flags.positional_encoding
                                ? positional_encode(cloud.points, PositionalEncodingConfig{cfg.pe_frequencies})
                                : cloud.points;
  std::span<const double> feats;
  if (cfg.flags.rgb_cloud) {
    feats = cloud.colors;
  } else if (cfg.flags.image_features) {
    require(cloud.d == cfg.d, ErrorCode::kDimension,
            "cloud features have d=" + std::to_string(cloud.d) + ", config d=" + std::to_string(cfg.d));
    feats = cloud.features;
  }
  std::span<const double> language;
  if (cfg.flags.language) {
    require(lang.vector.size() == cfg.d, ErrorCode::kDimension,
            "language embedding has " + std::to_string(lang.vector.size()) + " dims, config d=" + std::to_string(cfg.d));
    language = lang.vector;
  }
  return assemble_tokens(pos, layout.position_width, feats, layout.feature_width, language, p);
}

PoolSpec add_attention_pool(ParamStore& store, std::size_t width, std::size_t d_e, std::size_t d_k,
                            std::mt19937_64& rng) {
  PoolSpec spec;
  spec.width = width;
  spec.d_e = d_e;
  spec.d_k = d_k;
  spec.key = add_mlp(store, "pool.key", {width, d_e, d_k}, rng);
  spec.value = add_mlp(store, "pool.value", {width, d_e, d_e}, rng);
  spec.query = store.add("pool.query", {d_k});
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d_k)));
  for (auto& q : store.value(spec.query)) q = normal(rng);
  return spec;
}

template <typename S>
PoolWeights<S> load_pool(const ParamStore& store, const PoolSpec& spec) {
  PoolWeights<S> w;
  w.key = load_mlp<S>(store, spec.key);
  w.value = load_mlp<S>(store, spec.value);
  auto q = store.value(spec.query);
  w.query = Eigen::Map<const VecD>(q.data(), static_cast<Eigen::Index>(q.size())).cast<S>();
  return w;
}

namespace {

template <typename S>
void check_finite(const Mat<S>& m, const char* what) {
  require(m.allFinite(), ErrorCode::kNumeric, std::string("non-finite ") + what + " in pooling");
}

template <typename S>
void check_tokens(const Mat<S>& tokens, const PoolWeights<S>& w) {
  require(tokens.rows() >= 1, ErrorCode::kDimension, "pooling needs at least one token");
  require(!w.value.layers.empty() && tokens.cols() == w.value.layers.front().w.cols(), ErrorCode::kDimension,
          "token width " + std::to_string(tokens.cols()) + " does not match the pooling network");
}

template <typename S>
MlpCache<S>* cache_slot(PoolCache* cache, MlpCache<double> PoolCache::*member) {
  if constexpr (std::is_same_v<S, double>) {
    return cache ? &(cache->*member) : nullptr;
  } else {
    return nullptr;
  }
}

// The f64 reference path evaluates rows independently so identical tokens score identically;
// the f32 path keeps the batched product for speed.
template <typename S>
Mat<S> pool_mlp(const MlpWeights<S>& mlp, const Mat<S>& tokens, MlpCache<S>* cache) {
  if constexpr (std::is_same_v<S, double>) {
    return mlp_forward_rowwise(mlp, tokens, cache);
  } else {
    return mlp_forward(mlp, tokens, cache);
  }
}

template <typename S>
Vec<S> pool_logits(const Mat<S>& keys, const Vec<S>& query) {
  const S scale = S(1) / std::sqrt(static_cast<S>(query.size()));
  if constexpr (std::is_same_v<S, double>) {
    Vec<S> logits(keys.rows());
    Vec<S> k(keys.cols());
    for (Eigen::Index i = 0; i < keys.rows(); ++i) {
      k = keys.row(i).transpose();
      logits(i) = k.dot(query) * scale;
    }
    return logits;
  } else {
    return keys * query * scale;
  }
}

}  // namespace

template <typename S>
SceneEncodingT<S> attention_pool_forward(const Mat<S>& tokens, const PoolWeights<S>& w, PoolCache* cache) {
  static_assert(std::is_floating_point_v<S>);
  if constexpr (!std::is_same_v<S, double>) {
    require(cache == nullptr, ErrorCode::kInvalidArgument, "backward caches are only kept in double precision");
  }
  check_tokens(tokens, w);
  const Mat<S> keys = pool_mlp(w.key, tokens, cache_slot<S>(cache, &PoolCache::key_cache));
  const Mat<S> values = pool_mlp(w.value, tokens, cache_slot<S>(cache, &PoolCache::value_cache));
  require(keys.cols() == w.query.size(), ErrorCode::kDimension, "query width does not match key width");
  check_finite(keys, "keys");
  check_finite(values, "values");
  Vec<S> logits = pool_logits(keys, w.query);
  logits.array() -= logits.maxCoeff();
  Vec<S> weights = logits.array().exp();
  weights /= weights.sum();
  SceneEncodingT<S> out;
  out.z = values.transpose() * weights;
  out.attention = weights;
  require(out.z.allFinite() && weights.allFinite(), ErrorCode::kNumeric, "non-finite attention output");
  if constexpr (std::is_same_v<S, double>) {
    if (cache) {
      cache->kind = Pooling::kAttention;
      cache->keys = keys;
      cache->values = values;
      cache->weights = weights;
      cache->argmax.clear();
      cache->ready = true;
    }
  }
  return out;
}

template <typename S>
SceneEncodingT<S> max_pool_forward(const Mat<S>& tokens, const PoolWeights<S>& w, PoolCache* cache) {
  if constexpr (!std::is_same_v<S, double>) {
    require(cache == nullptr, ErrorCode::kInvalidArgument, "backward caches are only kept in double precision");
  }
  check_tokens(tokens, w);
  const Mat<S> values = pool_mlp(w.value, tokens, cache_slot<S>(cache, &PoolCache::value_cache));
  check_finite(values, "values");
  const Eigen::Index p = values.rows();
  const Eigen::Index de = values.cols();
  SceneEncodingT<S> out;
  out.z.resize(de);
  out.attention = Vec<S>::Zero(p);
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(de));
  for (Eigen::Index j = 0; j < de; ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < p; ++i) {
      if (values(i, j) > values(best, j)) best = i;
    }
    argmax[static_cast<std::size_t>(j)] = best;
    out.z(j) = values(best, j);
    out.attention(best) += S(1);
  }
  out.attention /= static_cast<S>(de);
  if constexpr (std::is_same_v<S, double>) {
    if (cache) {
      cache->kind = Pooling::kMax;
      cache->values = values;
      cache->keys.resize(0, 0);
      cache->weights = out.attention;
      cache->argmax = std::move(argmax);
      cache->ready = true;
    }
  }
  return out;
}

MatD attention_pool_backward(const PoolWeights<double>& w, const PoolSpec& spec, const ParamStore& store,
                             const PoolCache& cache, const VecD& upstream, std::span<double> grad) {
  require(cache.ready && cache.kind == Pooling::kAttention, ErrorCode::kState,
          "attention backward without a cached attention forward");
  require(upstream.size() == cache.values.cols(), ErrorCode::kDimension, "upstream gradient width != d_e");
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.query.size()));
  const VecD& a = cache.weights;
  const MatD dvalues = a * upstream.transpose();            // p x d_e
  const VecD da = cache.values * upstream;                  // p
  const VecD dlogits = (a.array() * (da.array() - a.dot(da))).matrix();  // softmax adjoint
  const MatD dkeys = dlogits * w.query.transpose() * scale;  // p x d_k
  const VecD dq = cache.keys.transpose() * dlogits * scale;

  const auto& qinfo = store.info(spec.query);
  Eigen::Map<VecD>(grad.data() + qinfo.offset, static_cast<Eigen::Index>(qinfo.size)) += dq;
  MatD dtokens = mlp_backward(w.key, spec.key, store, cache.key_cache, dkeys, grad);
  dtokens += mlp_backward(w.value, spec.value, store, cache.value_cache, dvalues, grad);
  return dtokens;
}

MatD max_pool_backward(const PoolWeights<double>& w, const PoolSpec& spec, const ParamStore& store,
                       const PoolCache& cache, const VecD& upstream, std::span<double> grad) {
  require(cache.ready && cache.kind == Pooling::kMax, ErrorCode::kState, "max-pool backward without a cached forward");
  require(upstream.size() == cache.values.cols(), ErrorCode::kDimension, "upstream gradient width != d_e");
  MatD dvalues = MatD::Zero(cache.values.rows(), cache.values.cols());
  for (Eigen::Index j = 0; j < upstream.size(); ++j) dvalues(cache.argmax[static_cast<std::size_t>(j)], j) = upstream(j);
  return mlp_backward(w.value, spec.value, store, cache.value_cache, dvalues, grad);
}

MatD pool_backward(const PoolWeights<double>& w, const PoolSpec& spec, const ParamStore& store, const PoolCache& cache,
                   const VecD& upstream, std::span<double> grad) {
  return cache.kind == Pooling::kAttention ? attention_pool_backward(w, spec, store, cache, upstream, grad)
                                           : max_pool_backward(w, spec, store, cache, upstream, grad);
}

TokenGradients split_token_gradient(const MatD& dtokens, const TokenLayout& layout) {
  require(static_cast<std::size_t>(dtokens.cols()) == layout.width(), ErrorCode::kDimension,
          "token gradient width does not match layout");
  TokenGradients g;
  const auto pw = static_cast<Eigen::Index>(layout.position_width);
  const auto fw = static_cast<Eigen::Index>(layout.feature_width);
  const auto lw = static_cast<Eigen::Index>(layout.language_width);
  g.position = dtokens.leftCols(pw);
  g.features = dtokens.middleCols(pw, fw);
  g.language = dtokens.rightCols(lw).colwise().sum().transpose();
  return g;
}

template PoolWeights<double> load_pool<double>(const ParamStore&, const PoolSpec&);
template PoolWeights<float> load_pool<float>(const ParamStore&, const PoolSpec&);
template SceneEncodingT<double> attention_pool_forward<double>(const MatD&, const PoolWeights<double>&, PoolCache*);
template SceneEncodingT<float> attention_pool_forward<float>(const Mat<float>&, const PoolWeights<float>&, PoolCache*);
template SceneEncodingT<double> max_pool_forward<double>(const MatD&, const PoolWeights<double>&, PoolCache*);
template SceneEncodingT<float> max_pool_forward<float>(const Mat<float>&, const PoolWeights<float>&, PoolCache*);

}  // namespace a3r
