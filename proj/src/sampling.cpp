#include "adapt3r/sampling.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "adapt3r/error.hpp"

namespace a3r {

std::string to_string(FpsMetric m) { return m == FpsMetric::kFeature ? "feature" : "position"; }

FpsMetric fps_metric_from_string(const std::string& s) {
  if (s == "feature") return FpsMetric::kFeature;
  if (s == "position") return FpsMetric::kPosition;
  fail(ErrorCode::kParse, "unknown FPS metric \"" + s + "\"");
}

template <typename T>
std::vector<std::size_t> farthest_point_sample_rows(std::span<const T> rows, std::size_t dim,
                                                    std::span<const std::uint8_t> valid, const SamplerConfig& cfg) {
  require(cfg.p >= 1, ErrorCode::kInvalidArgument, "FPS needs p >= 1");
  const std::size_t m = valid.size();
  require(rows.size() == m * dim, ErrorCode::kDimension, "FPS rows do not match the validity mask");

  std::vector<std::size_t> valid_rows;
  valid_rows.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (valid[i]) valid_rows.push_back(i);
  }
  require(!valid_rows.empty(), ErrorCode::kInvalidArgument, "FPS on a cloud with zero valid points");

  std::size_t start = 0;
  if (cfg.random_start_seed) {
    std::mt19937_64 rng(*cfg.random_start_seed);
    start = valid_rows[std::uniform_int_distribution<std::size_t>(0, valid_rows.size() - 1)(rng)];
  } else {
    auto it = std::lower_bound(valid_rows.begin(), valid_rows.end(), cfg.seed_index);
    start = it == valid_rows.end() ? valid_rows.front() : *it;
  }

  const std::size_t n_pick = std::min(cfg.p, valid_rows.size());
  std::vector<std::size_t> chosen;
  chosen.reserve(cfg.p);
  chosen.push_back(start);

  // Candidates are copied dimension-major (dim x v) so the distance update runs across
  // candidates; each distance still sums its coordinates in order. min_dist < 0 marks chosen rows.
  const std::size_t v = valid_rows.size();
  std::vector<T> block(v * dim);
  for (std::size_t k = 0; k < v; ++k) {
    const T* src = rows.data() + valid_rows[k] * dim;
    for (std::size_t c = 0; c < dim; ++c) block[c * v + k] = src[c];
  }
  std::vector<T> min_dist(v, std::numeric_limits<T>::infinity());
  std::size_t last_pos = static_cast<std::size_t>(std::lower_bound(valid_rows.begin(), valid_rows.end(), start) -
                                                  valid_rows.begin());
  min_dist[last_pos] = T(-1);
  std::vector<T> dist(v);
  while (chosen.size() < n_pick) {
    std::fill(dist.begin(), dist.end(), T(0));
    for (std::size_t c = 0; c < dim; ++c) {
      const T* col = block.data() + c * v;
      const T ac = col[last_pos];
      T* out = dist.data();
      for (std::size_t k = 0; k < v; ++k) {
        const T diff = ac - col[k];
        out[k] += diff * diff;
      }
    }
    T best = T(-1);
    std::size_t best_pos = v;
    for (std::size_t k = 0; k < v; ++k) {
      if (min_dist[k] < T(0)) continue;
      if (dist[k] < min_dist[k]) min_dist[k] = dist[k];
      if (min_dist[k] > best) {
        best = min_dist[k];
        best_pos = k;
      }
    }
    last_pos = best_pos;
    min_dist[last_pos] = T(-1);
    chosen.push_back(valid_rows[best_pos]);
  }
  for (std::size_t k = 0; chosen.size() < cfg.p; ++k) chosen.push_back(chosen[k % n_pick]);
  return chosen;
}

template std::vector<std::size_t> farthest_point_sample_rows<double>(std::span<const double>, std::size_t,
                                                                     std::span<const std::uint8_t>,
                                                                     const SamplerConfig&);
template std::vector<std::size_t> farthest_point_sample_rows<float>(std::span<const float>, std::size_t,
                                                                    std::span<const std::uint8_t>,
                                                                    const SamplerConfig&);

std::vector<std::size_t> farthest_point_sample(const FeatureCloud& cloud, const SamplerConfig& cfg) {
  if (cfg.metric == FpsMetric::kPosition) {
    return farthest_point_sample_rows<double>(cloud.points, 3, cloud.valid, cfg);
  }
  return farthest_point_sample_rows<double>(cloud.features, cloud.d, cloud.valid, cfg);
}

DownsampledCloud gather(const FeatureCloud& cloud, std::span<const std::size_t> indices) {
  DownsampledCloud out;
  out.d = cloud.d;
  out.indices.assign(indices.begin(), indices.end());
  out.points.reserve(3 * indices.size());
  out.features.reserve(cloud.d * indices.size());
  out.colors.reserve(3 * indices.size());
  for (std::size_t i : indices) {
    require(i < cloud.size(), ErrorCode::kInvalidArgument, "gather index " + std::to_string(i) + " out of range");
    require(cloud.valid[i] != 0, ErrorCode::kInvalidArgument, "gather index " + std::to_string(i) + " is invalid");
    out.points.insert(out.points.end(), cloud.points.begin() + static_cast<std::ptrdiff_t>(3 * i),
                      cloud.points.begin() + static_cast<std::ptrdiff_t>(3 * i + 3));
    out.features.insert(out.features.end(), cloud.features.begin() + static_cast<std::ptrdiff_t>(cloud.d * i),
                        cloud.features.begin() + static_cast<std::ptrdiff_t>(cloud.d * (i + 1)));
    out.colors.insert(out.colors.end(), cloud.colors.begin() + static_cast<std::ptrdiff_t>(3 * i),
                      cloud.colors.begin() + static_cast<std::ptrdiff_t>(3 * i + 3));
  }
  return out;
}

}  // namespace a3r
