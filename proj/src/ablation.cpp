#include "adapt3r/ablation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "adapt3r/error.hpp"

namespace a3r {

std::vector<double> camera_sweep_drift(const Adapt3rEncoder& encoder, const Dataset& scenes,
                                       const std::vector<double>& angles) {
  require(scenes.size() > 0, ErrorCode::kInvalidArgument, "camera sweep needs at least one scene");
  std::vector<double> drift(angles.size(), 0.0);
  for (const auto& ep : scenes.episodes) {
    Observation base = ep.obs;
    base.features.reset();
    const VecD z0 = encoder.encode(base).z;
    for (std::size_t a = 0; a < angles.size(); ++a) {
      drift[a] += (encoder.encode(rotate_scene_camera(ep, angles[a])).z - z0).norm();
    }
  }
  for (auto& v : drift) v /= static_cast<double>(scenes.size());
  return drift;
}

std::vector<AblationRow> run_ablation(const Dataset& ds, const AblationConfig& cfg) {
  require(!cfg.variants.empty(), ErrorCode::kInvalidArgument, "no variants requested");
  require(!cfg.seeds.empty(), ErrorCode::kInvalidArgument, "no seeds requested");
  for (const auto& v : cfg.variants) {
    const auto& known = variant_names();
    require(std::find(known.begin(), known.end(), v) != known.end(), ErrorCode::kInvalidArgument,
            "unknown variant \"" + v + "\"");
  }
  Dataset sweep;
  const std::size_t n_sweep = std::min(cfg.sweep_scenes, ds.size());
  sweep.episodes.assign(ds.episodes.begin(), ds.episodes.begin() + static_cast<std::ptrdiff_t>(n_sweep));

  std::vector<AblationRow> rows;
  for (const auto& variant : cfg.variants) {
    for (const std::uint64_t seed : cfg.seeds) {
      EncoderConfig enc = cfg.encoder;
      apply_variant(enc, variant);
      enc.seed = seed;
      PolicyConfig pol = cfg.policy;
      pol.seed = seed;
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      Policy policy(enc, pol);
      const TrainResult tr = train(policy, ds, tc);
      AblationRow row;
      row.variant = variant;
      row.seed = seed;
      row.initial_loss = tr.initial_loss;
      row.final_loss = tr.final_loss;
      row.drift = camera_sweep_drift(policy.encoder(), sweep, cfg.angles);
      row.mean_drift = row.drift.empty() ? 0.0
                                         : std::accumulate(row.drift.begin(), row.drift.end(), 0.0) /
                                               static_cast<double>(row.drift.size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        const std::vector<double>& angles) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << "variant,seed,initial_loss,final_loss";
  for (double a : angles) out << ",drift_" << a;
  out << ",mean_drift\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.variant << ',' << r.seed << ',' << r.initial_loss << ',' << r.final_loss;
    for (double d : r.drift) out << ',' << d;
    out << ',' << r.mean_drift << '\n';
  }
  require(out.good(), ErrorCode::kIo, "write failed: " + path);
}

}  // namespace a3r
