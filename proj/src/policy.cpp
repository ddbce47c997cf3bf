#include "adapt3r/decoders.hpp"

#include "adapt3r/error.hpp"

namespace a3r {

VecD proprio_vector(const Proprioception& p) {
  VecD v(4);
  v.head(3) = p.ee_pose.translation();
  v(3) = p.gripper;
  return v;
}

Policy::Policy(const EncoderConfig& enc, const PolicyConfig& pol) {
  encoder_ = std::make_unique<Adapt3rEncoder>(enc, store_);
  std::mt19937_64 rng(pol.seed ^ 0x706f6c696379ULL);
  const std::size_t de = enc.d_e;
  if (enc.use_proprio) proprio_ = add_mlp(store_, "proprio", {pol.proprio_dim, de, de}, rng);
  lang_ = add_mlp(store_, "lang_proj", {enc.d, de}, rng);
  head_ = std::make_unique<PolicyHead>(pol, de, enc.use_proprio ? de : 0, de, store_, rng);
}

bool Policy::cache_prepared() const {
  const auto& c = encoder_config();
  return !(c.finetune_backbone && c.flags.image_features && !c.flags.rgb_cloud);
}

Policy::Prepared Policy::prepare(const Observation& obs) const {
  Prepared p;
  p.cloud = encoder_->prepare(obs);
  if (p.cloud.language.vector.empty()) p.cloud.language = encoder_->backbone().embed_language(obs.instruction);
  p.tokens = encoder_->tokens(p.cloud);
  return p;
}

Policy::Weights Policy::load_weights() const {
  Weights w;
  w.pool = load_pool<double>(store_, encoder_->pool_spec());
  if (encoder_config().use_proprio) w.proprio = load_mlp<double>(store_, proprio_);
  w.lang = load_mlp<double>(store_, lang_);
  return w;
}

Policy::Forward Policy::forward(const Weights& w, const Prepared& prep, const Observation& obs) const {
  Forward f;
  f.encoding = encoder_->forward(prep.tokens, w.pool, f.pool);
  const std::size_t de = encoder_config().d_e;
  VecD u;
  if (encoder_config().use_proprio) {
    u = mlp_forward<double>(w.proprio, proprio_vector(obs.proprio).transpose(), &f.proprio_cache).row(0).transpose();
  }
  const auto& lv = prep.cloud.language.vector;
  const MatD lin = Eigen::Map<const RowVec<double>>(lv.data(), static_cast<Eigen::Index>(lv.size()));
  const VecD l = mlp_forward<double>(w.lang, lin, &f.lang_cache).row(0).transpose();
  f.cond.resize(static_cast<Eigen::Index>(head_->cond_dim()));
  Eigen::Index at = 0;
  f.cond.segment(at, static_cast<Eigen::Index>(de)) = f.encoding.z;
  at += static_cast<Eigen::Index>(de);
  if (u.size()) {
    f.cond.segment(at, u.size()) = u;
    at += u.size();
  }
  f.cond.segment(at, l.size()) = l;
  return f;
}

void Policy::backward_cond(const Weights& w, const Forward& fwd, const Prepared& prep, const Observation& obs,
                           const VecD& dcond, std::span<double> grad) const {
  const auto de = static_cast<Eigen::Index>(encoder_config().d_e);
  Eigen::Index at = 0;
  const VecD dz = dcond.segment(at, de);
  at += de;
  if (encoder_config().use_proprio) {
    mlp_backward(w.proprio, proprio_, store_, fwd.proprio_cache, dcond.segment(at, de).transpose(), grad);
    at += de;
  }
  mlp_backward(w.lang, lang_, store_, fwd.lang_cache, dcond.segment(at, de).transpose(), grad);
  const MatD dtokens = encoder_->backward(w.pool, fwd.pool, dz, grad);
  encoder_->backward_backbone(obs, prep.cloud, dtokens, grad);
}

double Policy::sample_loss(const Weights& w, const Prepared& prep, const Observation& obs, const ActionChunk& target,
                           const HeadNoise& noise, std::span<double> grad) const {
  const Forward f = forward(w, prep, obs);
  const HeadResult r = head_->loss(store_, f.cond, target.flat(), noise, grad);
  if (!grad.empty()) backward_cond(w, f, prep, obs, r.dcond, grad);
  return r.loss;
}

VecD Policy::predict(const Observation& obs) const {
  const Prepared prep = prepare(obs);
  const Forward f = forward(load_weights(), prep, obs);
  return head_->predict(store_, f.cond);
}

}  // namespace a3r
