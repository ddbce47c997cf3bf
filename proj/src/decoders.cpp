#include "adapt3r/decoders.hpp"

#include <cmath>
#include <numbers>

#include "adapt3r/error.hpp"

namespace a3r {

void ActionChunk::validate() const {
  require(horizon >= 1 && action_dim >= 1, ErrorCode::kInvalidArgument, "action chunk needs horizon >= 1");
  require(actions.size() == horizon * action_dim, ErrorCode::kDimension, "action chunk size mismatch");
  for (double a : actions) require(std::isfinite(a), ErrorCode::kNumeric, "action chunk has non-finite values");
}

NllResult gaussian_nll(const VecD& target, const VecD& mean, const VecD& std) {
  require(target.size() == mean.size() && mean.size() == std.size(), ErrorCode::kDimension, "nll shape mismatch");
  require((std.array() > 0.0).all(), ErrorCode::kInvalidArgument, "nll needs positive std");
  NllResult r;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const auto diff = (target - mean).array();
  const auto var = std.array().square();
  r.loss = (half_log_2pi + std.array().log() + diff.square() / (2.0 * var)).sum();
  r.dmean = (-diff / var).matrix();
  r.dstd = (1.0 / std.array() - diff.square() / (var * std.array())).matrix();
  return r;
}

double nll_loss(const ActionChunk& chunk, const VecD& mean, const VecD& std) {
  chunk.validate();
  return gaussian_nll(chunk.flat(), mean, std).loss;
}

MseResult mse(const VecD& target, const VecD& prediction) {
  require(target.size() == prediction.size() && target.size() > 0, ErrorCode::kDimension, "mse shape mismatch");
  MseResult r;
  const VecD diff = prediction - target;
  const double n = static_cast<double>(diff.size());
  r.loss = diff.squaredNorm() / n;
  r.dprediction = 2.0 * diff / n;
  return r;
}

KlResult kl_to_standard_normal(const VecD& mu, const VecD& std) {
  require(mu.size() == std.size(), ErrorCode::kDimension, "kl shape mismatch");
  require((std.array() > 0.0).all(), ErrorCode::kInvalidArgument, "posterior std must be positive");
  KlResult r;
  r.loss = 0.5 * (mu.array().square() + std.array().square() - 1.0 - 2.0 * std.array().log()).sum();
  r.dmu = mu;
  r.dstd = (std.array() - 1.0 / std.array()).matrix();
  return r;
}

CvaeResult cvae_objective(const VecD& target, const VecD& reconstruction, const VecD& mu, const VecD& std,
                          double beta) {
  const MseResult rec = mse(target, reconstruction);
  const KlResult kl = kl_to_standard_normal(mu, std);
  return {rec.loss + beta * kl.loss, rec.dprediction, beta * kl.dmu, beta * kl.dstd};
}

NoiseSchedule::NoiseSchedule(std::size_t train_steps) {
  require(train_steps >= 1, ErrorCode::kInvalidArgument, "noise schedule needs >= 1 step");
  auto alpha_bar_fn = [](double t) {
    const double c = std::cos((t + 0.008) / 1.008 * std::numbers::pi / 2.0);
    return c * c;
  };
  const auto k = static_cast<double>(train_steps);
  double cumulative = 1.0;
  for (std::size_t i = 0; i < train_steps; ++i) {
    const double beta = std::min(1.0 - alpha_bar_fn((i + 1) / k) / alpha_bar_fn(i / k), 0.999);
    betas_.push_back(beta);
    cumulative *= 1.0 - beta;
    alpha_bars_.push_back(cumulative);
  }
}

double NoiseSchedule::beta(std::size_t k) const {
  require(k >= 1 && k <= steps(), ErrorCode::kInvalidArgument, "diffusion step out of range");
  return betas_[k - 1];
}

double NoiseSchedule::alpha_bar(std::size_t k) const {
  require(k >= 1 && k <= steps(), ErrorCode::kInvalidArgument,
          "diffusion step " + std::to_string(k) + " outside [1, " + std::to_string(steps()) + "]");
  return alpha_bars_[k - 1];
}

VecD step_embedding(std::size_t k, std::size_t dim) {
  VecD e(static_cast<Eigen::Index>(dim));
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max<std::size_t>(half, 1));
    e(static_cast<Eigen::Index>(i)) = std::sin(static_cast<double>(k) * freq);
    e(static_cast<Eigen::Index>(half + i)) = std::cos(static_cast<double>(k) * freq);
  }
  if (dim % 2) e(static_cast<Eigen::Index>(dim - 1)) = 0.0;
  return e;
}

std::string to_string(HeadKind h) {
  switch (h) {
    case HeadKind::kNll:
      return "nll";
    case HeadKind::kDiffusion:
      return "diffusion";
    case HeadKind::kCvae:
      return "cvae";
  }
  return "nll";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "nll") return HeadKind::kNll;
  if (s == "diffusion") return HeadKind::kDiffusion;
  if (s == "cvae") return HeadKind::kCvae;
  fail(ErrorCode::kParse, "unknown head \"" + s + "\" (expected nll, diffusion or cvae)");
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

VecD run(const ParamStore& store, const MlpSpec& spec, const VecD& x, MlpCache<double>* cache,
         MlpWeights<double>* keep = nullptr) {
  MlpWeights<double> w = load_mlp<double>(store, spec);
  const MatD y = mlp_forward<double>(w, x.transpose(), cache);
  if (keep) *keep = std::move(w);
  return y.row(0).transpose();
}

VecD back(const ParamStore& store, const MlpSpec& spec, const MlpWeights<double>& w, const MlpCache<double>& cache,
          const VecD& dy, std::span<double> grad) {
  return mlp_backward(w, spec, store, cache, dy.transpose(), grad).row(0).transpose();
}

VecD concat(std::initializer_list<const VecD*> parts) {
  Eigen::Index n = 0;
  for (const auto* p : parts) n += p->size();
  VecD out(n);
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    out.segment(at, p->size()) = *p;
    at += p->size();
  }
  return out;
}

}  // namespace

PolicyHead::PolicyHead(const PolicyConfig& cfg, std::size_t z_dim, std::size_t u_dim, std::size_t l_dim,
                       ParamStore& store, std::mt19937_64& rng)
    : cfg_(cfg), z_dim_(z_dim), u_dim_(u_dim), l_dim_(l_dim), schedule_(cfg.diffusion_steps) {
  require(cfg.horizon >= 1 && cfg.action_dim >= 1 && cfg.hidden >= 1, ErrorCode::kInvalidArgument, "bad head config");
  const std::size_t c = chunk_dim();
  switch (cfg.head) {
    case HeadKind::kNll:
      net_ = add_mlp(store, "head.nll", {cond_dim(), cfg.hidden, cfg.hidden, 2 * c}, rng);
      break;
    case HeadKind::kDiffusion:
      net_ = add_mlp(store, "head.eps", {c + cfg.step_embed_dim + cond_dim(), cfg.hidden, cfg.hidden, c}, rng);
      break;
    case HeadKind::kCvae:
      encoder_ = add_mlp(store, "head.posterior", {c + z_dim + u_dim, cfg.hidden, 2 * cfg.latent_dim}, rng);
      net_ = add_mlp(store, "head.decoder", {cond_dim() + cfg.latent_dim, cfg.hidden, cfg.hidden, c}, rng);
      break;
  }
}

HeadNoise PolicyHead::draw_noise(std::mt19937_64& rng) const {
  HeadNoise n;
  std::normal_distribution<double> normal(0.0, 1.0);
  if (cfg_.head == HeadKind::kDiffusion) {
    n.step = std::uniform_int_distribution<std::size_t>(1, schedule_.steps())(rng);
    n.epsilon.resize(static_cast<Eigen::Index>(chunk_dim()));
    for (auto& e : n.epsilon) e = normal(rng);
  } else if (cfg_.head == HeadKind::kCvae) {
    n.latent.resize(static_cast<Eigen::Index>(cfg_.latent_dim));
    for (auto& e : n.latent) e = normal(rng);
  }
  return n;
}

HeadResult PolicyHead::loss(const ParamStore& store, const VecD& cond, const VecD& target, const HeadNoise& noise,
                            std::span<double> grad) const {
  require(static_cast<std::size_t>(cond.size()) == cond_dim(), ErrorCode::kDimension, "conditioning width mismatch");
  require(static_cast<std::size_t>(target.size()) == chunk_dim(), ErrorCode::kDimension, "target chunk size mismatch");
  const auto c = static_cast<Eigen::Index>(chunk_dim());
  const bool want_grad = !grad.empty();
  HeadResult out;
  switch (cfg_.head) {
    case HeadKind::kNll: {
      MlpCache<double> cache;
      MlpWeights<double> w;
      const VecD y = run(store, net_, cond, &cache, &w);
      const VecD mean = y.head(c);
      const VecD raw = y.tail(c);
      const VecD std = raw.unaryExpr([&](double r) { return cfg_.nll_std_floor + softplus(r); });
      const NllResult r = gaussian_nll(target, mean, std);
      out.loss = r.loss;
      if (want_grad) {
        VecD dy(2 * c);
        dy.head(c) = r.dmean;
        dy.tail(c) = r.dstd.cwiseProduct(raw.unaryExpr([](double v) { return sigmoid(v); }));
        out.dcond = back(store, net_, w, cache, dy, grad);
      }
      break;
    }
    case HeadKind::kDiffusion: {
      require(noise.epsilon.size() == c, ErrorCode::kDimension, "diffusion noise size mismatch");
      const double ab = schedule_.alpha_bar(noise.step);
      const VecD noised = std::sqrt(ab) * target + std::sqrt(1.0 - ab) * noise.epsilon;
      const VecD emb = step_embedding(noise.step, cfg_.step_embed_dim);
      const VecD input = concat({&noised, &emb, &cond});
      MlpCache<double> cache;
      MlpWeights<double> w;
      const VecD pred = run(store, net_, input, &cache, &w);
      const MseResult r = mse(noise.epsilon, pred);
      out.loss = r.loss;
      if (want_grad) {
        const VecD dinput = back(store, net_, w, cache, r.dprediction, grad);
        out.dcond = dinput.tail(static_cast<Eigen::Index>(cond_dim()));
      }
      break;
    }
    case HeadKind::kCvae: {
      const auto lat = static_cast<Eigen::Index>(cfg_.latent_dim);
      require(noise.latent.size() == lat, ErrorCode::kDimension, "latent noise size mismatch");
      const auto zu = static_cast<Eigen::Index>(z_dim_ + u_dim_);
      const VecD zu_part = cond.head(zu);
      const VecD enc_in = concat({&target, &zu_part});
      MlpCache<double> enc_cache;
      MlpWeights<double> enc_w;
      const VecD post = run(store, encoder_, enc_in, &enc_cache, &enc_w);
      const VecD mu = post.head(lat);
      const VecD raw = post.tail(lat);
      const VecD std = raw.unaryExpr([](double r) { return softplus(r) + 1e-4; });
      const VecD eta = mu + std.cwiseProduct(noise.latent);
      const VecD dec_in = concat({&cond, &eta});
      MlpCache<double> dec_cache;
      MlpWeights<double> dec_w;
      const VecD recon = run(store, net_, dec_in, &dec_cache, &dec_w);
      const CvaeResult r = cvae_objective(target, recon, mu, std, cfg_.beta);
      out.loss = r.loss;
      if (want_grad) {
        const VecD ddec = back(store, net_, dec_w, dec_cache, r.dreconstruction, grad);
        out.dcond = ddec.head(static_cast<Eigen::Index>(cond_dim()));
        const VecD deta = ddec.tail(lat);
        const VecD dmu = r.dmu + deta;
        const VecD dstd = r.dstd + deta.cwiseProduct(noise.latent);
        VecD dpost(2 * lat);
        dpost.head(lat) = dmu;
        dpost.tail(lat) = dstd.cwiseProduct(raw.unaryExpr([](double v) { return sigmoid(v); }));
        const VecD denc = back(store, encoder_, enc_w, enc_cache, dpost, grad);
        out.dcond.head(zu) += denc.tail(zu);
      }
      break;
    }
  }
  require(std::isfinite(out.loss), ErrorCode::kNumeric, "non-finite head loss");
  return out;
}

VecD PolicyHead::predict(const ParamStore& store, const VecD& cond) const {
  const auto c = static_cast<Eigen::Index>(chunk_dim());
  switch (cfg_.head) {
    case HeadKind::kNll:
      return run(store, net_, cond, nullptr).head(c);
    case HeadKind::kCvae: {
      const VecD eta = VecD::Zero(static_cast<Eigen::Index>(cfg_.latent_dim));
      return run(store, net_, concat({&cond, &eta}), nullptr);
    }
    case HeadKind::kDiffusion:
      break;
  }
  // Deterministic DDIM from x_K = 0, x0 estimate clipped to [-1, 1].
  VecD x = VecD::Zero(c);
  for (std::size_t k = schedule_.steps(); k >= 1; --k) {
    const double ab = schedule_.alpha_bar(k);
    const double ab_prev = k > 1 ? schedule_.alpha_bar(k - 1) : 1.0;
    const VecD emb = step_embedding(k, cfg_.step_embed_dim);
    const VecD eps = run(store, net_, concat({&x, &emb, &cond}), nullptr);
    const VecD x0 = ((x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab)).cwiseMax(-1.0).cwiseMin(1.0);
    x = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
  }
  return x;
}

}  // namespace a3r
