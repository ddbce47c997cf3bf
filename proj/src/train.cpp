#include "adapt3r/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "adapt3r/error.hpp"

namespace a3r {

void TrainConfig::validate() const {
  require(lr >= 0.0 && std::isfinite(lr), ErrorCode::kInvalidArgument, "learning rate must be >= 0");
  require(weight_decay >= 0.0, ErrorCode::kInvalidArgument, "weight decay must be >= 0");
  require(batch >= 1, ErrorCode::kInvalidArgument, "batch must be >= 1");
  require(grad_clip > 0.0, ErrorCode::kInvalidArgument, "grad clip must be > 0");
  require(epochs >= 1 || max_steps >= 1, ErrorCode::kInvalidArgument, "need epochs or max_steps");
  require(schedule == "cosine" || schedule == "constant", ErrorCode::kInvalidArgument,
          "schedule must be cosine or constant");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},           {"weight_decay", c.weight_decay}, {"batch", c.batch},   {"grad_clip", c.grad_clip},
          {"epochs", c.epochs},   {"schedule", c.schedule},         {"seed", c.seed},     {"threads", c.threads},
          {"max_steps", c.max_steps}, {"optimizer", "adam"},        {"beta1", c.beta1},   {"beta2", c.beta2},
          {"eps", c.eps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    require(j.is_object(), ErrorCode::kParse, "train config must be an object");
    for (const auto& [key, _] : j.items()) {
      static const char* known[] = {"lr",      "weight_decay", "batch", "grad_clip", "epochs", "schedule", "seed",
                                    "threads", "max_steps",    "optimizer", "beta1", "beta2",  "eps"};
      require(std::find(std::begin(known), std::end(known), key) != std::end(known), ErrorCode::kParse,
              "unknown train config key \"" + key + "\"");
    }
    require(j.value("optimizer", std::string("adam")) == "adam", ErrorCode::kParse, "only the adam optimizer exists");
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch = j.value("batch", c.batch);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.epochs = j.value("epochs", c.epochs);
    c.schedule = j.value("schedule", c.schedule);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("train config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kParse, e.what());
  }
  return c;
}

double cosine_lr(double lr_max, std::size_t step, std::size_t total) {
  if (total == 0) return lr_max;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return 0.5 * lr_max * (1.0 + std::cos(std::numbers::pi * frac));
}

double clip_grad_norm(std::span<double> grad, std::span<const std::uint8_t> mask, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (mask[i]) sq += grad[i] * grad[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (mask[i]) grad[i] *= scale;
    }
  }
  return norm;
}

Adam::Adam(std::size_t n, double beta1, double beta2, double eps, double weight_decay)
    : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

void Adam::step(std::span<double> values, std::span<const double> grad, std::span<const std::uint8_t> mask, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask[i]) continue;
    const double g = grad[i] + wd_ * values[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    values[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  return x;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; fn must only write slot i.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<Policy::Prepared> prepare_all(const Policy& policy, const Dataset& ds, std::size_t threads) {
  std::vector<Policy::Prepared> out(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t i) { out[i] = policy.prepare(ds.episodes[i].obs); });
  return out;
}

double evaluate_prepared(const Policy& policy, const Dataset& ds, const std::vector<Policy::Prepared>* cache,
                         std::uint64_t seed, std::size_t threads) {
  const auto w = policy.load_weights();
  std::vector<double> losses(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t i) {
    std::mt19937_64 rng(mix(seed, i));
    const HeadNoise noise = policy.head().draw_noise(rng);
    const auto& ep = ds.episodes[i];
    if (cache) {
      losses[i] = policy.sample_loss(w, (*cache)[i], ep.obs, ep.actions, noise, {});
    } else {
      losses[i] = policy.sample_loss(w, policy.prepare(ep.obs), ep.obs, ep.actions, noise, {});
    }
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(ds.size());
}

}  // namespace

double evaluate(const Policy& policy, const Dataset& ds, std::uint64_t seed, std::size_t threads) {
  require(ds.size() > 0, ErrorCode::kInvalidArgument, "empty dataset");
  return evaluate_prepared(policy, ds, nullptr, seed, threads);
}

TrainResult train(Policy& policy, const Dataset& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochStat&)>& on_epoch) {
  cfg.validate();
  require(ds.size() > 0, ErrorCode::kInvalidArgument, "empty dataset");
  ParamStore& store = policy.store();
  const std::size_t n = ds.size();
  const std::size_t batch = std::min(cfg.batch, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * steps_per_epoch;
  const std::uint64_t eval_seed = mix(cfg.seed, 0x6576616cULL);

  std::vector<Policy::Prepared> cache;
  if (policy.cache_prepared()) cache = prepare_all(policy, ds, cfg.threads);
  const std::vector<Policy::Prepared>* cache_ptr = cache.empty() ? nullptr : &cache;

  TrainResult result;
  result.initial_loss = evaluate_prepared(policy, ds, cache_ptr, eval_seed, cfg.threads);

  Adam adam(store.size(), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
  const auto mask = store.trainable_mask();
  std::mt19937_64 shuffle_rng(mix(cfg.seed, 0x73687566ULL));
  std::vector<std::size_t> order(n);
  const std::size_t workers = std::max<std::size_t>(cfg.threads, 1);
  std::vector<std::vector<double>> sample_grads(std::min(workers, batch), std::vector<double>(store.size()));

  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n && step < total; start += batch, ++step) {
      const std::size_t bsz = std::min(batch, n - start);
      lr = cfg.schedule == "cosine" ? cosine_lr(cfg.lr, step, total) : cfg.lr;
      const auto w = policy.load_weights();
      store.zero_grad();
      std::vector<double> losses(bsz);
      // Process the batch in waves of `workers` samples; reduce each wave in sample order.
      for (std::size_t wave = 0; wave < bsz; wave += sample_grads.size()) {
        const std::size_t count = std::min(sample_grads.size(), bsz - wave);
        try {
          parallel_for(count, workers, [&](std::size_t slot) {
            const std::size_t b = wave + slot;
            const std::size_t idx = order[start + b];
            auto& g = sample_grads[slot];
            std::fill(g.begin(), g.end(), 0.0);
            std::mt19937_64 rng(mix(mix(cfg.seed, step), idx));
            const HeadNoise noise = policy.head().draw_noise(rng);
            const auto& ep = ds.episodes[idx];
            if (cache_ptr) {
              losses[b] = policy.sample_loss(w, cache[idx], ep.obs, ep.actions, noise, g);
            } else {
              losses[b] = policy.sample_loss(w, policy.prepare(ep.obs), ep.obs, ep.actions, noise, g);
            }
          });
        } catch (const Error& e) {
          if (e.code() == ErrorCode::kNumeric) {
            fail(ErrorCode::kNumeric, "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
          }
          throw;
        }
        auto grads = store.grads();
        for (std::size_t slot = 0; slot < count; ++slot) {
          for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += sample_grads[slot][i];
        }
      }
      const double batch_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(bsz);
      require(std::isfinite(batch_loss), ErrorCode::kNumeric,
              "training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
      auto grads = store.grads();
      for (auto& g : grads) g /= static_cast<double>(bsz);
      clip_grad_norm(grads, mask, cfg.grad_clip);
      adam.step(store.values(), grads, mask, lr);
      result.step_losses.push_back(batch_loss);
      epoch_loss += batch_loss;
      ++epoch_steps;
    }
    EpochStat stat{epoch, epoch_loss / static_cast<double>(epoch_steps), lr};
    result.curve.push_back(stat);
    if (on_epoch) on_epoch(stat);
  }
  result.steps = step;
  result.final_loss = evaluate_prepared(policy, ds, cache_ptr, eval_seed, cfg.threads);
  require(std::isfinite(result.final_loss), ErrorCode::kNumeric, "training diverged (non-finite final loss)");
  return result;
}

void write_loss_csv(const std::string& path, const TrainResult& r) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << "epoch,loss,lr\n" << std::setprecision(17);
  for (const auto& e : r.curve) out << e.epoch << ',' << e.loss << ',' << e.lr << '\n';
}

}  // namespace a3r
