#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace a3r {

/// Handle into a ParamStore; stays valid as more parameters are added.
struct ParamId {
  std::size_t index = static_cast<std::size_t>(-1);
};

struct ParamInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool trainable = true;
};

/// Named dense tensors packed into one flat value buffer with a parallel gradient buffer.
/// Flat packing lets optimizers and per-sample gradient buffers work on plain spans.
class ParamStore {
 public:
  ParamId add(const std::string& name, std::vector<std::size_t> shape, bool trainable = true);
  ParamId find(const std::string& name) const;
  bool contains(const std::string& name) const;

  const ParamInfo& info(ParamId id) const { return params_.at(id.index); }
  const std::vector<ParamInfo>& params() const { return params_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> value(ParamId id);
  std::span<const double> value(ParamId id) const;
  std::span<double> grad(ParamId id);
  std::span<const double> grad(ParamId id) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }

  void zero_grad();
  void set_trainable(const std::string& prefix, bool trainable);
  /// 1 for trainable entries, 0 for frozen ones, laid out like values().
  std::vector<std::uint8_t> trainable_mask() const;

  /// Writes manifest.json plus one tensor file per parameter (f64).
  void save_checkpoint(const std::string& dir) const;
  /// Loads values for every parameter in this store; names and shapes must match the manifest.
  void load_checkpoint(const std::string& dir);

 private:
  std::vector<ParamInfo> params_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

/// Orthogonal init of a (rows x cols) row-major matrix, gain 1 (QR of a Gaussian, sign-corrected).
void orthogonal_init(std::span<double> w, std::size_t rows, std::size_t cols, std::mt19937_64& rng);

/// File-system-safe file name for a parameter name.
std::string param_file_name(const std::string& name);

}  // namespace a3r
