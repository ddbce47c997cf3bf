#include "adapt3r/pipeline.hpp"

#include <chrono>

#include "adapt3r/error.hpp"

namespace a3r {

namespace {

class StageClock {
 public:
  explicit StageClock(double* slot) : slot_(slot), start_(std::chrono::steady_clock::now()) {}
  ~StageClock() {
    if (slot_) {
      *slot_ += std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start_).count();
    }
  }

 private:
  double* slot_;
  std::chrono::steady_clock::time_point start_;
};

double* slot(StageTimings* t, double StageTimings::*member) { return t ? &(t->*member) : nullptr; }

}  // namespace

Adapt3rEncoder::Adapt3rEncoder(const EncoderConfig& cfg, ParamStore& store) : cfg_(cfg), store_(&store) {
  cfg_.validate();
  TestBackboneConfig bcfg;
  bcfg.d = cfg_.d;
  bcfg.stride = cfg_.backbone_stride;
  bcfg.hidden = cfg_.backbone_hidden;
  bcfg.seed = cfg_.seed;
  backbone_ = std::make_unique<TestBackbone>(bcfg, store);
  if (cfg_.finetune_backbone) store.set_trainable("backbone.", true);
  std::mt19937_64 rng(cfg_.seed ^ 0x706f6f6cULL);
  pool_ = add_attention_pool(store, cfg_.token_width(), cfg_.d_e, cfg_.d_k, rng);
}

PreparedCloud Adapt3rEncoder::prepare(const Observation& obs, StageTimings* timings) const {
  require(!obs.frames.empty(), ErrorCode::kInvalidArgument, "observation has no cameras");
  PreparedCloud out;
  {
    StageClock clock(slot(timings, &StageTimings::backbone));
    if (obs.features) {
      require(obs.features->size() == obs.frames.size(), ErrorCode::kDimension,
              "got " + std::to_string(obs.features->size()) + " feature volumes for " +
                  std::to_string(obs.frames.size()) + " cameras");
      for (const auto& v : *obs.features) {
        v.validate();
        require(v.d == cfg_.d, ErrorCode::kDimension,
                "feature volume has d=" + std::to_string(v.d) + ", config d=" + std::to_string(cfg_.d));
      }
      out.volumes = *obs.features;
    } else {
      for (const auto& f : obs.frames) out.volumes.push_back(extract_features(f, *backbone_, cfg_.d));
    }
    if (obs.language) {
      out.language = *obs.language;
    } else if (cfg_.flags.language) {
      out.language = backbone_->embed_language(obs.instruction);
    }
  }
  std::vector<PointMap> maps;
  {
    StageClock clock(slot(timings, &StageTimings::deproject));
    maps = deproject_all(obs.frames, cfg_.threads);
  }
  {
    StageClock clock(slot(timings, &StageTimings::fuse));
    out.cloud = fuse_point_maps(maps, obs.frames, out.volumes, cfg_.threads);
  }
  {
    StageClock clock(slot(timings, &StageTimings::crop));
    const CropConfig crop = cfg_.crop_config();
    out.cloud = apply_crops(out.cloud, crop);  // world box, base frame
    if (cfg_.flags.ee_frame) {
      out.cloud = to_ee_frame(out.cloud, obs.proprio);
      out.cloud = apply_crops(out.cloud, crop);  // ee z-crop, ee frame
    } else if (crop.ee_zmin) {
      apply_ee_crop(out.cloud, obs.proprio, *crop.ee_zmin);
    }
    require(out.cloud.valid_count() > 0, ErrorCode::kInvalidArgument, "no valid points left after cropping");
  }
  {
    StageClock clock(slot(timings, &StageTimings::fps));
    SamplerConfig scfg;
    scfg.p = cfg_.p;
    scfg.metric = cfg_.flags.fps_metric;
    if (cfg_.random_fps_start) scfg.random_start_seed = cfg_.seed;
    std::vector<std::size_t> idx;
    if (cfg_.precision == Precision::kF32 && scfg.metric == FpsMetric::kFeature) {
      std::vector<float> feats(out.cloud.features.begin(), out.cloud.features.end());
      idx = farthest_point_sample_rows<float>(feats, out.cloud.d, out.cloud.valid, scfg);
    } else {
      idx = farthest_point_sample(out.cloud, scfg);
    }
    out.sampled = gather(out.cloud, idx);
  }
  return out;
}

MatD Adapt3rEncoder::tokens(const PreparedCloud& prepared, StageTimings* timings) const {
  StageClock clock(slot(timings, &StageTimings::pe));
  return build_tokens(prepared.sampled, prepared.language, cfg_);
}

SceneEncoding Adapt3rEncoder::encode_tokens(const MatD& tokens, StageTimings* timings) const {
  StageClock clock(slot(timings, &StageTimings::pool));
  if (cfg_.precision == Precision::kF32) {
    const auto w = load_pool<float>(*store_, pool_);
    const Mat<float> t = tokens.cast<float>();
    const auto enc = cfg_.flags.pooling == Pooling::kAttention ? attention_pool_forward<float>(t, w)
                                                               : max_pool_forward<float>(t, w);
    return {enc.z.cast<double>(), enc.attention.cast<double>()};
  }
  const auto w = load_pool<double>(*store_, pool_);
  return cfg_.flags.pooling == Pooling::kAttention ? attention_pool_forward<double>(tokens, w)
                                                   : max_pool_forward<double>(tokens, w);
}

SceneEncoding Adapt3rEncoder::encode(const Observation& obs, StageTimings* timings) const {
  const PreparedCloud prepared = prepare(obs, timings);
  return encode_tokens(tokens(prepared, timings), timings);
}

SceneEncoding Adapt3rEncoder::forward(const MatD& tokens, const PoolWeights<double>& w, PoolCache& cache) const {
  return cfg_.flags.pooling == Pooling::kAttention ? attention_pool_forward<double>(tokens, w, &cache)
                                                   : max_pool_forward<double>(tokens, w, &cache);
}

MatD Adapt3rEncoder::backward(const PoolWeights<double>& w, const PoolCache& cache, const VecD& dz,
                              std::span<double> grad) const {
  return pool_backward(w, pool_, *store_, cache, dz, grad);
}

void Adapt3rEncoder::backward_backbone(const Observation& obs, const PreparedCloud& prepared, const MatD& dtokens,
                                       std::span<double> grad) const {
  if (!cfg_.finetune_backbone || obs.features || !cfg_.flags.image_features || cfg_.flags.rgb_cloud) return;
  const TokenGradients g = split_token_gradient(dtokens, layout());
  const std::size_t d = cfg_.d;
  std::vector<FeatureVolume> dvol = prepared.volumes;
  for (auto& v : dvol) std::fill(v.values.begin(), v.values.end(), 0.0);
  const auto& cells = prepared.cloud.cells_per_camera;
  for (std::size_t r = 0; r < prepared.sampled.size(); ++r) {
    std::size_t row = prepared.sampled.indices[r];
    std::size_t cam = 0;
    while (row >= cells[cam]) row -= cells[cam++];
    for (std::size_t c = 0; c < d; ++c) {
      dvol[cam].values[row * d + c] += g.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  for (std::size_t cam = 0; cam < obs.frames.size(); ++cam) backbone_->backward(obs.frames[cam], dvol[cam], grad);
}

}  // namespace a3r
