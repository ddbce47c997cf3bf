#pragma once

#include <random>
#include <span>
#include <vector>

#include "adapt3r/backbone.hpp"
#include "adapt3r/config.hpp"
#include "adapt3r/nn.hpp"
#include "adapt3r/sampling.hpp"

namespace a3r {

struct PositionalEncodingConfig {
  std::size_t frequencies = 10;
  std::size_t out_dim() const { return 6 * frequencies; }
};

/// Fourier features of N x 3 points -> N x 6L. Per row the layout is coordinate-major,
/// then frequency, then sin before cos:
///   [sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x), cos(2^{L-1} pi x), <same for y>, <same for z>]
std::vector<double> positional_encode(std::span<const double> points, const PositionalEncodingConfig& cfg);

/// Column ranges of each block inside a token row.
struct TokenLayout {
  std::size_t position_width = 0;
  std::size_t feature_width = 0;
  std::size_t language_width = 0;

  std::size_t feature_offset() const { return position_width; }
  std::size_t language_offset() const { return position_width + feature_width; }
  std::size_t width() const { return position_width + feature_width + language_width; }
};

TokenLayout token_layout(const EncoderConfig& cfg);

/// Row i = [positions_i | features_i | lang]. Empty blocks are omitted.
MatD assemble_tokens(std::span<const double> positions, std::size_t position_width,
                     std::span<const double> features, std::size_t feature_width,
                     std::span<const double> language, std::size_t rows);

/// Builds the token matrix for a downsampled cloud under the config's ablation flags.
MatD build_tokens(const DownsampledCloud& cloud, const LanguageEmbedding& lang, const EncoderConfig& cfg);

struct PoolSpec {
  MlpSpec key;    // width -> d_e -> d_k
  MlpSpec value;  // width -> d_e -> d_e
  ParamId query;  // d_k
  std::size_t d_k = 0;
  std::size_t d_e = 0;
  std::size_t width = 0;
};

/// Registers "pool.key", "pool.value" (orthogonal init) and "pool.query" (N(0, 1/d_k)).
PoolSpec add_attention_pool(ParamStore& store, std::size_t width, std::size_t d_e, std::size_t d_k,
                            std::mt19937_64& rng);

template <typename S>
struct PoolWeights {
  MlpWeights<S> key;
  MlpWeights<S> value;
  Vec<S> query;
};

template <typename S>
PoolWeights<S> load_pool(const ParamStore& store, const PoolSpec& spec);

template <typename S>
struct SceneEncodingT {
  Vec<S> z;          // d_e
  Vec<S> attention;  // p, sums to 1
};
using SceneEncoding = SceneEncodingT<double>;

/// Activations kept by a forward pass for the matching backward pass.
struct PoolCache {
  Pooling kind = Pooling::kAttention;
  MlpCache<double> key_cache;
  MlpCache<double> value_cache;
  MatD keys;
  MatD values;
  VecD weights;
  std::vector<Eigen::Index> argmax;  // max pooling: winning row per output dim
  bool ready = false;
};

/// z = softmax(q . K(P) / sqrt(d_k)) V(P), softmax shifted by its max.
template <typename S>
SceneEncodingT<S> attention_pool_forward(const Mat<S>& tokens, const PoolWeights<S>& w, PoolCache* cache = nullptr);

/// z_j = max_i V(P)_ij, lowest row on ties. `attention` is the share of output dims each row wins.
template <typename S>
SceneEncodingT<S> max_pool_forward(const Mat<S>& tokens, const PoolWeights<S>& w, PoolCache* cache = nullptr);

/// Accumulates parameter gradients of <upstream, z> into `grad` and returns d<upstream, z>/d tokens.
MatD attention_pool_backward(const PoolWeights<double>& w, const PoolSpec& spec, const ParamStore& store,
                             const PoolCache& cache, const VecD& upstream, std::span<double> grad);
MatD max_pool_backward(const PoolWeights<double>& w, const PoolSpec& spec, const ParamStore& store,
                       const PoolCache& cache, const VecD& upstream, std::span<double> grad);
/// Dispatches on cache.kind.
MatD pool_backward(const PoolWeights<double>& w, const PoolSpec& spec, const ParamStore& store, const PoolCache& cache,
                   const VecD& upstream, std::span<double> grad);

/// Splits a token gradient into per-block gradients; the language gradient is summed over rows
/// since the same vector is broadcast to every token.
struct TokenGradients {
  MatD position;
  MatD features;
  VecD language;
};
TokenGradients split_token_gradient(const MatD& dtokens, const TokenLayout& layout);

}  // namespace a3r
