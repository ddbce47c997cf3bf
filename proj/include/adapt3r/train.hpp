#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "adapt3r/decoders.hpp"
#include "adapt3r/synth_scenes.hpp"

namespace a3r {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::size_t batch = 64;
  double grad_clip = 100.0;
  std::size_t epochs = 100;
  std::string schedule = "cosine";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Caps the number of optimizer steps; 0 means epochs * ceil(N / batch).
  std::size_t max_steps = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// lr_max * (1 + cos(pi * step / total)) / 2; reaches 0 at step == total.
double cosine_lr(double lr_max, std::size_t step, std::size_t total);

/// Scales masked entries of `grad` so their l2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::span<double> grad, std::span<const std::uint8_t> mask, double max_norm);

/// Adam with L2 weight decay folded into the gradient (g + wd * theta).
class Adam {
 public:
  Adam(std::size_t n, double beta1, double beta2, double eps, double weight_decay);
  void step(std::span<double> values, std::span<const double> grad, std::span<const std::uint8_t> mask, double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_, wd_;
  std::size_t t_ = 0;
};

struct EpochStat {
  std::size_t epoch = 0;
  double loss = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochStat> curve;
  std::vector<double> step_losses;
  double initial_loss = 0;  // full-dataset loss before the first step
  double final_loss = 0;    // full-dataset loss after the last step
  std::size_t steps = 0;
};

/// Mean loss over the dataset with noise drawn from `seed`.
double evaluate(const Policy& policy, const Dataset& ds, std::uint64_t seed, std::size_t threads = 1);

/// Minibatch Adam with cosine LR and global-norm clipping. Per-sample gradients are summed
/// in sample order, so results are bitwise identical for any thread count.
TrainResult train(Policy& policy, const Dataset& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochStat&)>& on_epoch = {});

/// CSV with header "epoch,loss,lr".
void write_loss_csv(const std::string& path, const TrainResult& r);

}  // namespace a3r
