#include <doctest.h>

#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "adapt3r/experiment.hpp"
#include "adapt3r/synth_scenes.hpp"
#include "adapt3r/train.hpp"
#include "support/helpers.hpp"

using namespace a3r;

namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig x = toy_experiment_config();
  x.encoder.p = 24;
  x.encoder.d = 8;
  x.encoder.d_e = 12;
  x.encoder.d_k = 12;
  x.encoder.pe_frequencies = 3;
  x.policy.hidden = 16;
  x.train.batch = 4;
  x.train.max_steps = 6;
  return x;
}

Dataset tiny_dataset(std::size_t n) {
  ReachTaskConfig task;
  task.image_size = 32;
  return make_reach_task(task, n, 7);
}

std::vector<double> values_of(const Policy& p) { return {p.store().values().begin(), p.store().values().end()}; }

}  // namespace

TEST_CASE("cosine schedule endpoints and shape") {
  CHECK(cosine_lr(1e-3, 0, 100) == 1e-3);
  CHECK(cosine_lr(1e-3, 50, 100) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(std::abs(cosine_lr(1e-3, 100, 100)) < 1e-18);
  for (std::size_t s = 0; s < 100; ++s) CHECK(cosine_lr(1.0, s + 1, 100) <= cosine_lr(1.0, s, 100));
  CHECK(cosine_lr(1.0, 25, 100) == doctest::Approx((1.0 + std::cos(std::numbers::pi / 4)) / 2.0));
}

TEST_CASE("global norm clipping") {
  std::vector<double> g{3.0, 4.0, 100.0};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  CHECK(clip_grad_norm(g, mask, 1.0) == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));
  CHECK(g[2] == 100.0);
  std::vector<double> small{0.1, 0.2, 0.0};
  const auto before = small;
  CHECK(clip_grad_norm(small, mask, 100.0) == doctest::Approx(std::sqrt(0.05)));
  CHECK(small == before);
}

TEST_CASE("Adam first step, weight decay and mask") {
  Adam adam(3, 0.9, 0.999, 1e-8, 0.0);
  std::vector<double> v{1.0, -2.0, 5.0};
  const std::vector<double> g{0.5, -3.0, 1.0};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  adam.step(v, g, mask, 0.1);
  CHECK(v[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(v[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(v[2] == 5.0);
  CHECK(adam.steps() == 1);

  Adam decay(1, 0.9, 0.999, 1e-8, 0.5);
  std::vector<double> w{2.0};
  const std::vector<double> zero{0.0};
  const std::vector<std::uint8_t> on{1};
  decay.step(w, zero, on, 0.01);
  CHECK(w[0] == doctest::Approx(1.99).epsilon(1e-6));

  Adam still(2, 0.9, 0.999, 1e-8, 1e-4);
  std::vector<double> u{1.0, 2.0};
  const std::vector<double> gu{3.0, 4.0};
  const std::vector<std::uint8_t> both{1, 1};
  still.step(u, gu, both, 0.0);
  CHECK(u == std::vector<double>{1.0, 2.0});
}

TEST_CASE("train config json is strict and round-trips") {
  TrainConfig c;
  c.lr = 3e-3;
  c.batch = 7;
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(back.lr == 3e-3);
  CHECK(back.batch == 7);
  CHECK(testing::error_code_of([] { train_config_from_json(nlohmann::json{{"learning_rate", 1.0}}); }) == ErrorCode::kParse);
  CHECK(testing::error_code_of([] { train_config_from_json(nlohmann::json{{"optimizer", "sgd"}}); }) == ErrorCode::kParse);
  CHECK(testing::error_code_of([] {
          TrainConfig bad;
          bad.batch = 0;
          bad.validate();
        }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  ExperimentConfig x = tiny_experiment();
  x.train.lr = 0.0;
  Policy policy(x.encoder, x.policy);
  const auto before = values_of(policy);
  const TrainResult r = train(policy, tiny_dataset(8), x.train);
  CHECK(r.steps == 6);
  CHECK(values_of(policy) == before);
}

TEST_CASE("one step moves the query but not the frozen backbone") {
  ExperimentConfig x = tiny_experiment();
  x.train.max_steps = 1;
  Policy policy(x.encoder, x.policy);
  const auto& s = policy.store();
  const auto q0 = std::vector<double>(s.value(s.find("pool.query")).begin(), s.value(s.find("pool.query")).end());
  const auto b0 =
      std::vector<double>(s.value(s.find("backbone.l0.weight")).begin(), s.value(s.find("backbone.l0.weight")).end());
  train(policy, tiny_dataset(8), x.train);
  const auto q1 = s.value(s.find("pool.query"));
  const auto b1 = s.value(s.find("backbone.l0.weight"));
  CHECK(!std::equal(q0.begin(), q0.end(), q1.begin()));
  CHECK(std::equal(b0.begin(), b0.end(), b1.begin()));
}

TEST_CASE("training is bitwise reproducible across runs and thread counts") {
  const Dataset ds = tiny_dataset(10);
  ExperimentConfig x = tiny_experiment();
  for (HeadKind head : {HeadKind::kNll, HeadKind::kDiffusion, HeadKind::kCvae}) {
    x.policy.head = head;
    Policy a(x.encoder, x.policy), b(x.encoder, x.policy), c(x.encoder, x.policy);
    x.train.threads = 1;
    const TrainResult ra = train(a, ds, x.train);
    const TrainResult rb = train(b, ds, x.train);
    x.train.threads = 3;
    const TrainResult rc = train(c, ds, x.train);
    CAPTURE(to_string(head));
    CHECK(values_of(a) == values_of(b));
    CHECK(values_of(a) == values_of(c));
    CHECK(ra.step_losses == rb.step_losses);
    CHECK(ra.step_losses == rc.step_losses);
    CHECK(evaluate(a, ds, 1, 1) == evaluate(a, ds, 1, 4));
  }
}

TEST_CASE("loss goes down and the curve is recorded") {
  ExperimentConfig x = tiny_experiment();
  x.train.max_steps = 40;
  x.train.lr = 3e-3;
  Policy policy(x.encoder, x.policy);
  std::size_t epochs_seen = 0;
  const TrainResult r = train(policy, tiny_dataset(16), x.train, [&](const EpochStat&) { ++epochs_seen; });
  CHECK(r.steps == 40);
  CHECK(r.step_losses.size() == 40);
  CHECK(r.final_loss < r.initial_loss);
  CHECK(epochs_seen == r.curve.size());
  CHECK(r.curve.size() == 10);

  testing::TempDir dir("train");
  write_loss_csv(dir / "loss.csv", r);
  std::ifstream in(dir / "loss.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,loss,lr");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == r.curve.size());
}

TEST_CASE("experiment config: toy preset, strict keys, file errors") {
  const ExperimentConfig toy = toy_experiment_config();
  CHECK(toy.encoder.p == 64);
  CHECK(toy.train.max_steps == 200);
  const ExperimentConfig back = experiment_config_from_json(to_json(toy));
  CHECK(to_json(back) == to_json(toy));
  CHECK(testing::error_code_of([] { experiment_config_from_json(nlohmann::json{{"trainer", nlohmann::json::object()}}); }) == ErrorCode::kParse);
  testing::TempDir dir("exp");
  CHECK(testing::error_code_of([&] { read_json_file(dir / "missing.json"); }) == ErrorCode::kIo);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK(testing::error_code_of([&] { read_json_file(dir / "bad.json"); }) == ErrorCode::kParse);
}
