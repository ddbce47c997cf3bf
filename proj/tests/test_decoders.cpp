#include <doctest.h>

#include <numbers>

#include "adapt3r/decoders.hpp"
#include "adapt3r/synth_scenes.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace a3r;

namespace {

VecD randn(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  VecD v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

PolicyConfig small_policy(HeadKind head) {
  PolicyConfig p;
  p.head = head;
  p.horizon = 3;
  p.action_dim = 2;
  p.hidden = 8;
  p.latent_dim = 3;
  p.step_embed_dim = 4;
  p.diffusion_steps = 20;
  return p;
}

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.d = 8;
  e.d_e = 6;
  e.d_k = 5;
  e.p = 12;
  e.pe_frequencies = 2;
  e.backbone_stride = 4;
  e.backbone_hidden = 8;
  return e;
}

}  // namespace

TEST_CASE("gaussian nll matches its closed form") {
  std::mt19937_64 rng(1);
  const VecD t = randn(rng, 5), m = randn(rng, 5);
  const VecD s = randn(rng, 5).cwiseAbs().array() + 0.2;
  double expect = 0.0;
  for (int i = 0; i < 5; ++i) {
    expect += 0.5 * std::log(2.0 * std::numbers::pi * s[i] * s[i]) + (t[i] - m[i]) * (t[i] - m[i]) / (2.0 * s[i] * s[i]);
  }
  CHECK(gaussian_nll(t, m, s).loss == doctest::Approx(expect).epsilon(1e-14));
  CHECK(testing::error_code_of([&] { gaussian_nll(t, m, VecD::Zero(5)); }) == ErrorCode::kInvalidArgument);
  CHECK(testing::error_code_of([&] { gaussian_nll(t, m.head(4), s); }) == ErrorCode::kDimension);
}

TEST_CASE("KL vanishes at the prior and is positive elsewhere") {
  CHECK(kl_to_standard_normal(VecD::Zero(4), VecD::Ones(4)).loss == 0.0);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const VecD mu = randn(rng, 4);
    const VecD sd = randn(rng, 4).cwiseAbs().array() + 1e-3;
    CHECK(kl_to_standard_normal(mu, sd).loss > 0.0);
  }
}

TEST_CASE("noise schedule follows the squared cosine") {
  const NoiseSchedule s(100);
  CHECK(s.steps() == 100);
  const double a0 = oracle::cosine_alpha_bar(0.0);
  for (std::size_t k = 1; k < 100; ++k) {
    CHECK(s.alpha_bar(k) == doctest::Approx(oracle::cosine_alpha_bar(k / 100.0) / a0).epsilon(1e-10));
    CHECK(s.alpha_bar(k + 1) < s.alpha_bar(k));
    CHECK(s.beta(k) > 0.0);
    CHECK(s.beta(k) <= 0.999);
  }
  CHECK(s.beta(100) == 0.999);
  CHECK(s.alpha_bar(100) < 1e-6);
  CHECK(testing::error_code_of([&] { s.beta(0); }) == ErrorCode::kInvalidArgument);
  CHECK(testing::error_code_of([&] { s.beta(101); }) == ErrorCode::kInvalidArgument);
  CHECK(testing::error_code_of([] { NoiseSchedule bad(0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("step embedding is sin then cos") {
  const VecD e = step_embedding(7, 4);
  CHECK(e[0] == doctest::Approx(std::sin(7.0)));
  CHECK(e[1] == doctest::Approx(std::sin(7.0 * 0.01)));
  CHECK(e[2] == doctest::Approx(std::cos(7.0)));
  CHECK(e[3] == doctest::Approx(std::cos(7.0 * 0.01)));
}

TEST_CASE("every head gives a non-negative loss") {
  std::mt19937_64 rng(3);
  for (HeadKind kind : {HeadKind::kNll, HeadKind::kDiffusion, HeadKind::kCvae}) {
    ParamStore store;
    const PolicyHead head(small_policy(kind), 4, 3, 2, store, rng);
    for (int i = 0; i < 200; ++i) {
      const VecD cond = randn(rng, 9, 3.0);
      const VecD target = randn(rng, 6, 3.0);
      CHECK(head.loss(store, cond, target, head.draw_noise(rng), {}).loss >= 0.0);
    }
  }
}

TEST_CASE("head gradients match finite differences") {
  std::mt19937_64 rng(4);
  for (HeadKind kind : {HeadKind::kNll, HeadKind::kDiffusion, HeadKind::kCvae}) {
    for (int trial = 0; trial < 3; ++trial) {
      ParamStore store;
      const PolicyHead head(small_policy(kind), 4, 3, 2, store, rng);
      std::normal_distribution<double> n(0.0, 0.3);
      for (auto& v : store.values()) v += n(rng);
      VecD cond = randn(rng, 9);
      const VecD target = randn(rng, 6);
      const HeadNoise noise = head.draw_noise(rng);
      store.zero_grad();
      const HeadResult r = head.loss(store, cond, target, noise, store.grads());
      const std::vector<double> analytic(store.grads().begin(), store.grads().end());
      auto f = [&] { return head.loss(store, cond, target, noise, {}).loss; };
      CAPTURE(to_string(kind));
      CHECK(oracle::relative_error(analytic, oracle::numeric_gradient(f, store.values())) < 1e-5);
      CHECK(oracle::relative_error(std::span<const double>(r.dcond.data(), r.dcond.size()),
                                   oracle::numeric_gradient(f, std::span<double>(cond.data(), cond.size()))) < 1e-5);
    }
  }
}

TEST_CASE("full policy gradient matches finite differences") {
  std::mt19937_64 rng(5);
  ReachTaskConfig task;
  task.image_size = 32;
  task.horizon = 3;
  const Episode ep = make_reach_episode(task, rng);
  for (HeadKind kind : {HeadKind::kNll, HeadKind::kCvae}) {
    PolicyConfig pc = small_policy(kind);
    pc.action_dim = 4;
    Policy policy(small_encoder(), pc);
    const auto prep = policy.prepare(ep.obs);
    const HeadNoise noise = policy.head().draw_noise(rng);
    auto& store = policy.store();
    store.zero_grad();
    policy.sample_loss(policy.load_weights(), prep, ep.obs, ep.actions, noise, store.grads());
    std::vector<double> analytic, numeric;
    const auto mask = store.trainable_mask();
    auto f = [&] { return policy.sample_loss(policy.load_weights(), prep, ep.obs, ep.actions, noise, {}); };
    const auto all = oracle::numeric_gradient(f, store.values());
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      analytic.push_back(store.grads()[i]);
      numeric.push_back(all[i]);
    }
    CAPTURE(to_string(kind));
    CHECK(oracle::relative_error(analytic, numeric) < 1e-5);
  }
}

TEST_CASE("policy parameter layout") {
  Policy policy(small_encoder(), small_policy(HeadKind::kNll));
  const auto& s = policy.store();
  CHECK(s.contains("proprio.l0.weight"));
  CHECK(s.info(s.find("proprio.l0.weight")).shape == std::vector<std::size_t>{6, 4});
  CHECK(s.info(s.find("proprio.l1.weight")).shape == std::vector<std::size_t>{6, 6});
  CHECK(s.info(s.find("lang_proj.l0.weight")).shape == std::vector<std::size_t>{6, 8});
  const auto mask = s.trainable_mask();
  const auto& bb = s.info(s.find("backbone.l0.weight"));
  CHECK(mask[bb.offset] == 0);
  CHECK(mask[s.info(s.find("pool.query")).offset] == 1);
}

TEST_CASE("proprioception vector and head names") {
  const Proprioception p{RigidTransform::from_translation({0.1, 0.2, 0.3}), 0.75};
  const VecD u = proprio_vector(p);
  REQUIRE(u.size() == 4);
  CHECK(u[0] == 0.1);
  CHECK(u[2] == 0.3);
  CHECK(u[3] == 0.75);
  for (HeadKind h : {HeadKind::kNll, HeadKind::kDiffusion, HeadKind::kCvae}) CHECK(head_kind_from_string(to_string(h)) == h);
  CHECK(testing::error_code_of([] { head_kind_from_string("gmm"); }) == ErrorCode::kParse);
}

TEST_CASE("prediction is deterministic and chunk-sized") {
  std::mt19937_64 rng(6);
  ReachTaskConfig task;
  task.image_size = 32;
  const Episode ep = make_reach_episode(task, rng);
  for (HeadKind kind : {HeadKind::kNll, HeadKind::kDiffusion, HeadKind::kCvae}) {
    PolicyConfig pc = small_policy(kind);
    pc.horizon = task.horizon;
    pc.action_dim = 4;
    const Policy policy(small_encoder(), pc);
    const VecD a = policy.predict(ep.obs);
    CHECK(a.size() == static_cast<Eigen::Index>(task.horizon * 4));
    CHECK(a == policy.predict(ep.obs));
  }
}
