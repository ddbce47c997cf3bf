#include "adapt3r/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "adapt3r/error.hpp"

namespace a3r {

namespace {

constexpr char kMagic[4] = {'A', '3', 'R', 'T'};
constexpr std::uint8_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  require(pos + sizeof(T) <= bytes.size(), ErrorCode::kTruncated, "tensor header truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  require(t.shape.size() <= 255, ErrorCode::kShape, "tensor rank exceeds 255");
  require(t.values.size() == t.numel(), ErrorCode::kShape, "tensor values do not match shape");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint8_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) put<std::uint32_t>(out, d);
  out.reserve(out.size() + t.values.size() * (t.dtype == DType::kF32 ? 4 : 8));
  if (t.dtype == DType::kF32) {
    for (double v : t.values) put<float>(out, static_cast<float>(v));
  } else {
    for (double v : t.values) put<double>(out, v);
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::kBadMagic,
          "not an A3RT tensor (bad magic)");
  std::size_t pos = 4;
  const auto version = get<std::uint8_t>(bytes, pos);
  require(version == kVersion, ErrorCode::kBadMagic, "unsupported tensor version " + std::to_string(version));
  const auto dtype = get<std::uint8_t>(bytes, pos);
  require(dtype <= 1, ErrorCode::kDType, "unknown tensor dtype " + std::to_string(dtype));
  const auto rank = get<std::uint8_t>(bytes, pos);
  Tensor t;
  t.dtype = static_cast<DType>(dtype);
  t.shape.resize(rank);
  for (auto& d : t.shape) d = get<std::uint32_t>(bytes, pos);
  const std::size_t n = t.numel();
  const std::size_t width = t.dtype == DType::kF32 ? 4 : 8;
  require(bytes.size() - pos >= n * width, ErrorCode::kTruncated, "tensor payload truncated");
  require(bytes.size() - pos == n * width, ErrorCode::kShape, "tensor payload longer than its shape");
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.values[i] = t.dtype == DType::kF32 ? static_cast<double>(get<float>(bytes, pos)) : get<double>(bytes, pos);
  }
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::kIo, "write failed for " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

Tensor load_tensor(const std::string& path, std::size_t expected_rank) {
  Tensor t = load_tensor(path);
  require(t.rank() == expected_rank, ErrorCode::kShape,
          path + ": expected rank " + std::to_string(expected_rank) + ", got " + std::to_string(t.rank()));
  return t;
}

Tensor make_tensor(std::vector<std::uint32_t> shape, std::span<const double> values, DType dtype) {
  Tensor t;
  t.dtype = dtype;
  t.shape = std::move(shape);
  t.values.assign(values.begin(), values.end());
  require(t.values.size() == t.numel(), ErrorCode::kShape, "values do not match shape");
  return t;
}

Tensor make_tensor(std::vector<std::uint32_t> shape, std::span<const float> values) {
  Tensor t;
  t.dtype = DType::kF32;
  t.shape = std::move(shape);
  t.values.assign(values.begin(), values.end());
  require(t.values.size() == t.numel(), ErrorCode::kShape, "values do not match shape");
  return t;
}

}  // namespace a3r
