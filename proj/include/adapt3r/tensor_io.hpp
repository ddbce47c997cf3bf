#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace a3r {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

/// Dense row-major tensor as stored on disk. Values are held widened to double;
/// f32 -> f64 -> f32 is exact, so saving a loaded tensor reproduces its bytes.
struct Tensor {
  DType dtype = DType::kF64;
  std::vector<std::uint32_t> shape;
  std::vector<double> values;

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }
};

// Layout: "A3RT" | u8 version=1 | u8 dtype | u8 rank | u32 dims[rank] | payload (all little-endian).
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);
/// load_tensor plus a rank check (kShape on mismatch).
Tensor load_tensor(const std::string& path, std::size_t expected_rank);

Tensor make_tensor(std::vector<std::uint32_t> shape, std::span<const double> values, DType dtype = DType::kF64);
Tensor make_tensor(std::vector<std::uint32_t> shape, std::span<const float> values);

}  // namespace a3r
