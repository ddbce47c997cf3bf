#include <doctest.h>

#include <algorithm>
#include <set>

#include "adapt3r/sampling.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace a3r;

namespace {

FeatureCloud random_cloud(std::mt19937_64& rng, std::size_t m, std::size_t d, double invalid_rate) {
  FeatureCloud c;
  c.d = d;
  std::normal_distribution<double> n;
  std::bernoulli_distribution drop(invalid_rate);
  for (std::size_t i = 0; i < m; ++i) {
    for (int k = 0; k < 3; ++k) c.points.push_back(n(rng));
    for (std::size_t k = 0; k < d; ++k) c.features.push_back(n(rng));
    for (int k = 0; k < 3; ++k) c.colors.push_back(0.5);
    c.valid.push_back(drop(rng) ? 0 : 1);
  }
  c.cells_per_camera = {m};
  return c;
}

}  // namespace

TEST_CASE("matches the brute-force sampler for both metrics") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng() % 64;
    const std::size_t p = 1 + rng() % 16;
    const std::size_t d = 1 + rng() % 6;
    FeatureCloud c = random_cloud(rng, m, d, 0.2);
    if (c.valid_count() == 0) c.valid[0] = 1;
    const std::size_t seed_index = rng() % m;
    CAPTURE(trial);
    SamplerConfig cfg{p, FpsMetric::kFeature, seed_index, std::nullopt};
    CHECK(farthest_point_sample(c, cfg) == oracle::farthest_point_sample(c.features, d, c.valid, p, seed_index));
    cfg.metric = FpsMetric::kPosition;
    CHECK(farthest_point_sample(c, cfg) == oracle::farthest_point_sample(c.points, 3, c.valid, p, seed_index));
  }
}

TEST_CASE("features equal to coordinates give the same selection under either metric") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureCloud c = random_cloud(rng, 48, 3, 0.1);
    c.valid[0] = 1;
    c.features = c.points;
    const SamplerConfig f{12, FpsMetric::kFeature, 0, std::nullopt};
    const SamplerConfig q{12, FpsMetric::kPosition, 0, std::nullopt};
    CHECK(farthest_point_sample(c, f) == farthest_point_sample(c, q));
  }
}

TEST_CASE("float and double rows agree on well-separated data") {
  std::vector<double> rows;
  std::vector<std::uint8_t> valid(30, 1);
  for (int i = 0; i < 30; ++i) rows.insert(rows.end(), {double(i * i % 31), double(i * 7 % 13), double(i)});
  const std::vector<float> rows_f(rows.begin(), rows.end());
  const SamplerConfig cfg{10, FpsMetric::kFeature, 0, std::nullopt};
  CHECK(farthest_point_sample_rows<double>(rows, 3, valid, cfg) == farthest_point_sample_rows<float>(rows_f, 3, valid, cfg));
}

TEST_CASE("sampling output: distinct when enough valid rows, cycled otherwise") {
  std::mt19937_64 rng(2);
  FeatureCloud c = random_cloud(rng, 40, 4, 0.0);
  const auto idx = farthest_point_sample(c, {16, FpsMetric::kFeature, 0, std::nullopt});
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 16);
  CHECK(idx.front() == 0);

  std::fill(c.valid.begin(), c.valid.end(), 0);
  c.valid[5] = c.valid[17] = c.valid[30] = 1;
  const auto cyc = farthest_point_sample(c, {8, FpsMetric::kFeature, 20, std::nullopt});
  REQUIRE(cyc.size() == 8);
  CHECK(cyc[0] == 30);
  for (std::size_t i = 3; i < 8; ++i) CHECK(cyc[i] == cyc[i % 3]);
  for (auto i : cyc) CHECK(c.valid[i] == 1);
}

TEST_CASE("random start is reproducible and lands on a valid row") {
  std::mt19937_64 rng(4);
  FeatureCloud c = random_cloud(rng, 50, 3, 0.5);
  c.valid[0] = 1;
  const SamplerConfig cfg{6, FpsMetric::kPosition, 0, 99};
  const auto a = farthest_point_sample(c, cfg);
  CHECK(a == farthest_point_sample(c, cfg));
  CHECK(c.valid[a[0]] == 1);
}

TEST_CASE("degenerate inputs are rejected") {
  std::mt19937_64 rng(1);
  FeatureCloud c = random_cloud(rng, 10, 2, 0.0);
  CHECK(testing::error_code_of([&] { farthest_point_sample(c, {0, FpsMetric::kFeature, 0, std::nullopt}); }) ==
        ErrorCode::kInvalidArgument);
  std::fill(c.valid.begin(), c.valid.end(), 0);
  CHECK(testing::error_code_of([&] { farthest_point_sample(c, {4, FpsMetric::kFeature, 0, std::nullopt}); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(fps_metric_from_string(to_string(FpsMetric::kPosition)) == FpsMetric::kPosition);
  CHECK(testing::error_code_of([] { fps_metric_from_string("random"); }) == ErrorCode::kParse);
}

TEST_CASE("gather copies the selected rows") {
  std::mt19937_64 rng(6);
  FeatureCloud c = random_cloud(rng, 20, 5, 0.0);
  c.valid[3] = 0;
  const std::vector<std::size_t> idx{7, 2, 7};
  const DownsampledCloud g = gather(c, idx);
  CHECK(g.size() == 3);
  CHECK(g.d == 5);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 5; ++j) CHECK(g.features[k * 5 + j] == c.features[idx[k] * 5 + j]);
    for (int j = 0; j < 3; ++j) CHECK(g.points[k * 3 + j] == c.points[idx[k] * 3 + j]);
  }
  const std::vector<std::size_t> bad{3};
  CHECK(testing::error_code_of([&] { gather(c, bad); }) == ErrorCode::kInvalidArgument);
}
