#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "adapt3r/encoder.hpp"
#include "adapt3r/pipeline.hpp"
#include "adapt3r/synth_scenes.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace a3r;

namespace {

struct Pool {
  ParamStore store;
  PoolSpec spec;
  Pool(std::size_t width, std::size_t d_e, std::size_t d_k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    spec = add_attention_pool(store, width, d_e, d_k, rng);
  }
  PoolWeights<double> weights() const { return load_pool<double>(store, spec); }
};

MatD random_tokens(std::mt19937_64& rng, std::size_t p, std::size_t width) {
  std::normal_distribution<double> n;
  MatD t(p, width);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

std::vector<double> row(const MatD& m, Eigen::Index i) {
  std::vector<double> r(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) r[static_cast<std::size_t>(c)] = m(i, c);
  return r;
}

std::vector<double> oracle_mlp(const ParamStore& store, const MlpSpec& spec, const std::vector<double>& x) {
  std::vector<std::vector<double>> w, b;
  for (std::size_t l = 0; l < spec.weights.size(); ++l) {
    auto wv = store.value(spec.weights[l]);
    auto bv = store.value(spec.biases[l]);
    w.emplace_back(wv.begin(), wv.end());
    b.emplace_back(bv.begin(), bv.end());
  }
  return oracle::mlp(x, w, b);
}

oracle::PoolOutput oracle_pool(const Pool& pool, const MatD& tokens) {
  std::vector<std::vector<double>> keys, values;
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
    keys.push_back(oracle_mlp(pool.store, pool.spec.key, row(tokens, i)));
    values.push_back(oracle_mlp(pool.store, pool.spec.value, row(tokens, i)));
  }
  auto q = pool.store.value(pool.spec.query);
  return oracle::attention_pool(keys, values, std::vector<double>(q.begin(), q.end()));
}

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.d = 16;
  cfg.d_e = 32;
  cfg.d_k = 32;
  cfg.p = 64;
  cfg.backbone_stride = 4;
  cfg.backbone_hidden = 16;
  return cfg;
}

Episode small_episode(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ReachTaskConfig task;
  task.image_size = 48;
  return make_reach_episode(task, rng);
}

}  // namespace

TEST_CASE("positional encoding layout and values") {
  const PositionalEncodingConfig cfg{10};
  CHECK(cfg.out_dim() == 60);
  const std::vector<double> zero{0.0, 0.0, 0.0};
  const auto g0 = positional_encode(zero, cfg);
  REQUIRE(g0.size() == 60);
  for (std::size_t i = 0; i < 60; ++i) CHECK(g0[i] == (i % 2 == 0 ? 0.0 : 1.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> pts;
  for (int i = 0; i < 3 * 25; ++i) pts.push_back(u(rng));
  const auto g = positional_encode(pts, cfg);
  REQUIRE(g.size() == 25 * 60);
  for (std::size_t r = 0; r < 25; ++r) {
    const auto expect = oracle::positional_encoding({pts[3 * r], pts[3 * r + 1], pts[3 * r + 2]}, 10);
    for (std::size_t c = 0; c < 60; ++c) CHECK(std::abs(g[r * 60 + c] - expect[c]) < 1e-12);
  }
  // y block starts at 2L; its first pair is sin/cos(pi y).
  const std::vector<double> y_only{0.0, 0.25, 0.0};
  const auto gy = positional_encode(y_only, cfg);
  CHECK(std::abs(gy[20] - std::sin(std::numbers::pi / 4)) < 1e-15);
  CHECK(std::abs(gy[21] - std::cos(std::numbers::pi / 4)) < 1e-15);
  CHECK(gy[0] == 0.0);
}

TEST_CASE("tokens are [position | features | language] with language broadcast") {
  const std::vector<double> pos{1, 2, 3, 4};
  const std::vector<double> feat{10, 11, 12, 13, 14, 15};
  const std::vector<double> lang{7, 8};
  const MatD t = assemble_tokens(pos, 2, feat, 3, lang, 2);
  REQUIRE(t.rows() == 2);
  REQUIRE(t.cols() == 7);
  const double expect[2][7] = {{1, 2, 10, 11, 12, 7, 8}, {3, 4, 13, 14, 15, 7, 8}};
  for (int i = 0; i < 2; ++i) {
    for (int c = 0; c < 7; ++c) CHECK(t(i, c) == expect[i][c]);
  }

  EncoderConfig cfg = small_config();
  CHECK(token_layout(cfg).width() == 60 + 16 + 16);
  apply_variant(cfg, "no-lang");
  CHECK(token_layout(cfg).language_width == 0);
  cfg = small_config();
  apply_variant(cfg, "no-pe");
  CHECK(token_layout(cfg).position_width == 3);
  cfg = small_config();
  apply_variant(cfg, "rgb-cloud");
  CHECK(token_layout(cfg).feature_width == 3);
  cfg = small_config();
  apply_variant(cfg, "no-image-features");
  CHECK(token_layout(cfg).feature_width == 0);
}

TEST_CASE("attention pooling matches the loop oracle") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Pool pool(7, 5, 4, rng());
    const MatD tokens = random_tokens(rng, 9, 7);
    const auto out = attention_pool_forward<double>(tokens, pool.weights());
    const auto expect = oracle_pool(pool, tokens);
    for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(out.attention[i] - expect.weights[i]) < 1e-12);
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(out.z[c] - expect.z[c]) < 1e-12);
  }
}

TEST_CASE("attention weights form a distribution and z stays in the value hull") {
  std::mt19937_64 rng(12);
  const Pool pool(12, 8, 8, 5);
  for (int trial = 0; trial < 20; ++trial) {
    MatD tokens = random_tokens(rng, 30, 12) * 3.0;
    const auto out = attention_pool_forward<double>(tokens, pool.weights());
    CHECK(std::abs(out.attention.sum() - 1.0) < 1e-12);
    CHECK(out.attention.minCoeff() >= 0.0);
    const auto w32 = load_pool<float>(pool.store, pool.spec);
    const auto out32 = attention_pool_forward<float>(tokens.cast<float>(), w32);
    CHECK(std::abs(out32.attention.sum() - 1.0f) < 1e-6f);

    const MatD values = mlp_forward(pool.weights().value, tokens);
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      CHECK(out.z[c] >= values.col(c).minCoeff() - 1e-12);
      CHECK(out.z[c] <= values.col(c).maxCoeff() + 1e-12);
    }
  }
}

TEST_CASE("pooling is permutation invariant") {
  std::mt19937_64 rng(13);
  const Pool pool(6, 5, 5, 2);
  const MatD tokens = random_tokens(rng, 40, 6);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  MatD shuffled(40, 6);
  for (int i = 0; i < 40; ++i) shuffled.row(i) = tokens.row(perm[i]);
  const auto a = attention_pool_forward<double>(tokens, pool.weights());
  const auto b = attention_pool_forward<double>(shuffled, pool.weights());
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() < 1e-9);
  for (int i = 0; i < 40; ++i) CHECK(std::abs(b.attention[i] - a.attention[perm[i]]) < 1e-12);
  const auto ma = max_pool_forward<double>(tokens, pool.weights());
  const auto mb = max_pool_forward<double>(shuffled, pool.weights());
  CHECK((ma.z - mb.z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identical tokens get exactly uniform weight") {
  std::mt19937_64 rng(14);
  const Pool pool(6, 4, 4, 3);
  const MatD one = random_tokens(rng, 1, 6);
  for (std::size_t p : {1u, 3u, 17u, 64u}) {
    const MatD tokens = one.replicate(p, 1);
    const auto out = attention_pool_forward<double>(tokens, pool.weights());
    for (std::size_t i = 0; i < p; ++i) CHECK(out.attention[i] == 1.0 / static_cast<double>(p));
  }
}

TEST_CASE("a dominant score makes attention nearly one-hot") {
  std::mt19937_64 rng(15);
  Pool pool(6, 16, 16, 4);
  const MatD tokens = random_tokens(rng, 8, 6);
  const MatD keys = mlp_forward(pool.weights().key, tokens);
  VecD target = VecD::Zero(8);
  target[3] = 50.0 * std::sqrt(16.0);
  const VecD q = keys.completeOrthogonalDecomposition().solve(target);
  std::copy(q.data(), q.data() + 16, pool.store.value(pool.spec.query).begin());
  const auto out = attention_pool_forward<double>(tokens, pool.weights());
  CHECK(out.attention[3] >= 1.0 - 7.0 * std::exp(-50.0) * 1.01);
  const MatD values = mlp_forward(pool.weights().value, tokens);
  CHECK((out.z - values.row(3).transpose()).norm() < 1e-12 * (1.0 + values.norm()) + 1e-18);
}

TEST_CASE("max pooling takes column maxima") {
  std::mt19937_64 rng(16);
  const Pool pool(5, 6, 4, 7);
  const MatD tokens = random_tokens(rng, 11, 5);
  const auto out = max_pool_forward<double>(tokens, pool.weights());
  const MatD values = mlp_forward_rowwise(pool.weights().value, tokens);
  for (Eigen::Index c = 0; c < 6; ++c) CHECK(out.z[c] == values.col(c).maxCoeff());
  CHECK(std::abs(out.attention.sum() - 1.0) < 1e-12);
}

TEST_CASE("pool backward matches finite differences") {
  std::mt19937_64 rng(17);
  for (Pooling kind : {Pooling::kAttention, Pooling::kMax}) {
    for (int trial = 0; trial < 5; ++trial) {
      Pool pool(5, 4, 3, rng());
      MatD tokens = random_tokens(rng, 6, 5);
      VecD up = VecD::Random(4);
      auto forward = [&](const MatD& t, PoolCache* cache) {
        return kind == Pooling::kAttention ? attention_pool_forward<double>(t, pool.weights(), cache)
                                           : max_pool_forward<double>(t, pool.weights(), cache);
      };
      PoolCache cache;
      forward(tokens, &cache);
      pool.store.zero_grad();
      const MatD dtokens = pool_backward(pool.weights(), pool.spec, pool.store, cache, up, pool.store.grads());
      const std::vector<double> analytic(pool.store.grads().begin(), pool.store.grads().end());
      auto objective = [&] { return up.dot(forward(tokens, nullptr).z); };
      const auto numeric = oracle::numeric_gradient(objective, pool.store.values());
      CAPTURE(trial);
      CHECK(oracle::relative_error(analytic, numeric) < 1e-5);
      const auto numeric_t = oracle::numeric_gradient(objective, std::span<double>(tokens.data(), tokens.size()));
      CHECK(oracle::relative_error(std::span<const double>(dtokens.data(), dtokens.size()), numeric_t) < 1e-5);
    }
  }
}

TEST_CASE("zero upstream gives zero gradients") {
  std::mt19937_64 rng(18);
  Pool pool(5, 4, 3, 1);
  const MatD tokens = random_tokens(rng, 6, 5);
  PoolCache cache;
  attention_pool_forward<double>(tokens, pool.weights(), &cache);
  pool.store.zero_grad();
  const MatD dt = pool_backward(pool.weights(), pool.spec, pool.store, cache, VecD::Zero(4), pool.store.grads());
  for (double g : pool.store.grads()) CHECK(g == 0.0);
  CHECK(dt.isZero(0.0));
}

TEST_CASE("pool initialization") {
  const Pool pool(300, 256, 256, 0);
  for (const MlpSpec* mlp : {&pool.spec.key, &pool.spec.value}) {
    for (std::size_t l = 0; l < mlp->weights.size(); ++l) {
      const std::size_t out = mlp->dims[l + 1], in = mlp->dims[l];
      auto v = pool.store.value(mlp->weights[l]);
      const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(v.data(), out, in);
      const MatD gram = out <= in ? MatD(w * w.transpose()) : MatD(w.transpose() * w);
      CHECK((gram - MatD::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-10);
      for (double b : pool.store.value(mlp->biases[l])) CHECK(b == 0.0);
    }
  }
  const auto q = pool.store.value(pool.spec.query);
  const double mean = std::accumulate(q.begin(), q.end(), 0.0) / q.size();
  double var = 0.0;
  for (double x : q) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / (q.size() - 1));
  CHECK(sd == doctest::Approx(1.0 / 16.0).epsilon(0.15));
  CHECK(pool.store.contains("pool.query"));
  CHECK(pool.store.contains("pool.key.l0.weight"));
  CHECK(pool.store.contains("pool.value.l1.bias"));
}

TEST_CASE("token gradient splits by block and sums language over rows") {
  const TokenLayout layout{2, 3, 2};
  MatD g(3, 7);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = static_cast<double>(i);
  const TokenGradients parts = split_token_gradient(g, layout);
  CHECK(parts.position == g.leftCols(2));
  CHECK(parts.features == g.middleCols(2, 3));
  CHECK(parts.language == g.rightCols(2).colwise().sum().transpose());
}

TEST_CASE("encoder end to end") {
  const Episode ep = small_episode(2);
  ParamStore store;
  EncoderConfig cfg = small_config();
  const Adapt3rEncoder enc(cfg, store);
  const SceneEncoding a = enc.encode(ep.obs);
  CHECK(a.z.size() == 32);
  CHECK(a.attention.size() == 64);
  CHECK(std::abs(a.attention.sum() - 1.0) < 1e-12);
  const SceneEncoding b = enc.encode(ep.obs);
  CHECK(a.z == b.z);

  cfg.precision = Precision::kF32;
  ParamStore store32;
  const Adapt3rEncoder enc32(cfg, store32);
  const SceneEncoding c = enc32.encode(ep.obs);
  CHECK((c.z - a.z).norm() <= 1e-4 * (1.0 + a.z.norm()));

  StageTimings t;
  enc.encode(ep.obs, &t);
  CHECK(t.fps > 0.0);
  CHECK(t.pool > 0.0);

  const PreparedCloud prepared = enc.prepare(ep.obs);
  CHECK(prepared.sampled.size() == 64);
  CHECK(prepared.cloud.frame == FrameTag::kEe);
  for (std::size_t i = 0; i < prepared.cloud.size(); ++i) {
    if (prepared.cloud.valid[i]) CHECK(prepared.cloud.points[3 * i + 2] >= cfg.ee_zmin);
  }
  const MatD tokens = enc.tokens(prepared);
  CHECK(static_cast<std::size_t>(tokens.cols()) == cfg.token_width());
  CHECK((enc.encode_tokens(tokens).z - a.z).norm() < 1e-12);
}

TEST_CASE("instruction changes the encoding only when language is on") {
  Episode ep = small_episode(3);
  ParamStore s1, s2;
  EncoderConfig cfg = small_config();
  const Adapt3rEncoder with(cfg, s1);
  apply_variant(cfg, "no-lang");
  const Adapt3rEncoder without(cfg, s2);
  const auto z1 = with.encode(ep.obs).z;
  const auto w1 = without.encode(ep.obs).z;
  ep.obs.instruction = "reach the green sphere";
  CHECK(with.encode(ep.obs).z != z1);
  CHECK(without.encode(ep.obs).z == w1);
}
