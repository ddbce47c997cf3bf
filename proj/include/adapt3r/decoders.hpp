#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "adapt3r/nn.hpp"
#include "adapt3r/pipeline.hpp"

namespace a3r {

/// horizon x action_dim actions, row-major.
struct ActionChunk {
  std::size_t horizon = 0;
  std::size_t action_dim = 0;
  std::vector<double> actions;

  void validate() const;
  VecD flat() const { return Eigen::Map<const VecD>(actions.data(), static_cast<Eigen::Index>(actions.size())); }
};

// ---- Loss formulas (value + gradient w.r.t. the head outputs) ----

struct NllResult {
  double loss = 0;
  VecD dmean;
  VecD dstd;
};
/// -log N(target; mean, diag(std^2)), summed over elements. kInvalidArgument if any std <= 0.
NllResult gaussian_nll(const VecD& target, const VecD& mean, const VecD& std);
double nll_loss(const ActionChunk& chunk, const VecD& mean, const VecD& std);

struct MseResult {
  double loss = 0;
  VecD dprediction;
};
/// Mean over elements of (prediction - target)^2.
MseResult mse(const VecD& target, const VecD& prediction);

/// Diagonal-Gaussian KL(N(mu, std^2) || N(0, 1)) summed over latent dims.
struct KlResult {
  double loss = 0;
  VecD dmu;
  VecD dstd;
};
KlResult kl_to_standard_normal(const VecD& mu, const VecD& std);

struct CvaeResult {
  double loss = 0;
  VecD dreconstruction;
  VecD dmu;
  VecD dstd;
};
/// MSE(chunk, reconstruction) + beta * KL(posterior || N(0, 1)).
CvaeResult cvae_objective(const VecD& target, const VecD& reconstruction, const VecD& mu, const VecD& std, double beta);

/// squaredcos_cap_v2 beta schedule: alpha_bar(t) = cos^2(((t + 0.008) / 1.008) * pi / 2),
/// beta_i = min(1 - alpha_bar((i+1)/K) / alpha_bar(i/K), 0.999). Steps are 1-based.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::size_t train_steps = 100);
  std::size_t steps() const { return betas_.size(); }
  double beta(std::size_t k) const;
  /// Cumulative signal rate after k noising steps.
  double alpha_bar(std::size_t k) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// Fixed sinusoidal embedding of a diffusion step.
VecD step_embedding(std::size_t k, std::size_t dim);

// ---- Heads ----

enum class HeadKind { kNll, kDiffusion, kCvae };
std::string to_string(HeadKind h);
HeadKind head_kind_from_string(const std::string& s);

struct PolicyConfig {
  HeadKind head = HeadKind::kNll;
  std::size_t horizon = 8;
  std::size_t action_dim = 4;
  std::size_t hidden = 128;
  std::size_t proprio_dim = 4;  // ee position + gripper
  std::size_t latent_dim = 16;
  std::size_t diffusion_steps = 100;
  std::size_t step_embed_dim = 16;
  double beta = 10.0;
  /// Lower bound added to the NLL head's softplus std. 1/sqrt(2 pi) keeps the loss non-negative.
  double nll_std_floor = 0.3989422804014327;
  std::uint64_t seed = 0;
};

/// Per-sample randomness drawn by the caller so runs are reproducible under any threading.
struct HeadNoise {
  std::size_t step = 1;  // diffusion step k in [1, K]
  VecD epsilon;          // diffusion noise, chunk-sized
  VecD latent;           // CVAE reparameterization noise, latent-sized
};

struct HeadResult {
  double loss = 0;
  VecD dcond;
};

/// Decoder head on the conditioning vector [z | u | l].
class PolicyHead {
 public:
  PolicyHead(const PolicyConfig& cfg, std::size_t z_dim, std::size_t u_dim, std::size_t l_dim, ParamStore& store,
             std::mt19937_64& rng);

  std::size_t cond_dim() const { return z_dim_ + u_dim_ + l_dim_; }
  std::size_t chunk_dim() const { return cfg_.horizon * cfg_.action_dim; }
  const PolicyConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  HeadNoise draw_noise(std::mt19937_64& rng) const;

  /// Loss on one sample; accumulates parameter gradients into `grad` when non-null.
  HeadResult loss(const ParamStore& store, const VecD& cond, const VecD& target, const HeadNoise& noise,
                  std::span<double> grad) const;
  /// Deterministic prediction: NLL mean, CVAE decode at eta = 0, diffusion by DDIM from x_K = 0.
  VecD predict(const ParamStore& store, const VecD& cond) const;

 private:
  PolicyConfig cfg_;
  std::size_t z_dim_, u_dim_, l_dim_;
  NoiseSchedule schedule_;
  MlpSpec net_;      // nll: cond -> 2*chunk; diffusion: [noised | step | cond] -> chunk; cvae: decoder
  MlpSpec encoder_;  // cvae posterior: [chunk | z | u] -> 2*latent
};

/// Proprioception vector fed to U_theta: ee position then gripper.
VecD proprio_vector(const Proprioception& p);

/// Full trainable policy: observation encoder, proprioception encoder, language projection, head.
class Policy {
 public:
  Policy(const EncoderConfig& enc, const PolicyConfig& pol);

  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const Adapt3rEncoder& encoder() const { return *encoder_; }
  const PolicyHead& head() const { return *head_; }
  const EncoderConfig& encoder_config() const { return encoder_->config(); }
  const PolicyConfig& policy_config() const { return head_->config(); }
  const MlpSpec& proprio_spec() const { return proprio_; }

  /// Preprocessing reusable across steps while the backbone is frozen.
  struct Prepared {
    PreparedCloud cloud;
    MatD tokens;
  };
  Prepared prepare(const Observation& obs) const;
  bool cache_prepared() const;

  /// [z | u | l] for one observation plus activations for backward.
  struct Forward {
    PoolCache pool;
    SceneEncoding encoding;
    MlpCache<double> proprio_cache;
    MlpCache<double> lang_cache;
    VecD cond;
  };

  struct Weights {
    PoolWeights<double> pool;
    MlpWeights<double> proprio;
    MlpWeights<double> lang;
  };
  Weights load_weights() const;

  Forward forward(const Weights& w, const Prepared& prep, const Observation& obs) const;
  /// Loss on one sample with full backward into `grad`.
  double sample_loss(const Weights& w, const Prepared& prep, const Observation& obs, const ActionChunk& target,
                     const HeadNoise& noise, std::span<double> grad) const;
  /// Backpropagates a conditioning gradient through proprio/language/encoder (and backbone when finetuning).
  void backward_cond(const Weights& w, const Forward& fwd, const Prepared& prep, const Observation& obs,
                     const VecD& dcond, std::span<double> grad) const;
  VecD predict(const Observation& obs) const;

 private:
  ParamStore store_;
  std::unique_ptr<Adapt3rEncoder> encoder_;
  MlpSpec proprio_;
  MlpSpec lang_;
  std::unique_ptr<PolicyHead> head_;
};

}  // namespace a3r
