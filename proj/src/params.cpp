#include "adapt3r/params.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

#include "adapt3r/error.hpp"
#include "adapt3r/tensor_io.hpp"

namespace a3r {

ParamId ParamStore::add(const std::string& name, std::vector<std::size_t> shape, bool trainable) {
  require(!contains(name), ErrorCode::kInvalidArgument, "duplicate parameter " + name);
  ParamInfo info;
  info.name = name;
  info.size = 1;
  for (auto d : shape) info.size *= d;
  info.shape = std::move(shape);
  info.offset = values_.size();
  info.trainable = trainable;
  values_.resize(values_.size() + info.size, 0.0);
  grads_.resize(values_.size(), 0.0);
  params_.push_back(std::move(info));
  return ParamId{params_.size() - 1};
}

ParamId ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return ParamId{i};
  }
  fail(ErrorCode::kInvalidArgument, "no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::span<double> ParamStore::value(ParamId id) {
  const auto& p = params_.at(id.index);
  return std::span<double>(values_).subspan(p.offset, p.size);
}

std::span<const double> ParamStore::value(ParamId id) const {
  const auto& p = params_.at(id.index);
  return std::span<const double>(values_).subspan(p.offset, p.size);
}

std::span<double> ParamStore::grad(ParamId id) {
  const auto& p = params_.at(id.index);
  return std::span<double>(grads_).subspan(p.offset, p.size);
}

std::span<const double> ParamStore::grad(ParamId id) const {
  const auto& p = params_.at(id.index);
  return std::span<const double>(grads_).subspan(p.offset, p.size);
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void ParamStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) p.trainable = trainable;
  }
}

std::vector<std::uint8_t> ParamStore::trainable_mask() const {
  std::vector<std::uint8_t> mask(values_.size(), 0);
  for (const auto& p : params_) {
    if (p.trainable) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(p.offset), p.size, 1);
  }
  return mask;
}

std::string param_file_name(const std::string& name) {
  std::string out;
  for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '.';
  return out + ".a3rt";
}

void ParamStore::save_checkpoint(const std::string& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + dir);
  nlohmann::json manifest;
  manifest["format"] = "a3r-checkpoint";
  manifest["version"] = 1;
  auto& list = manifest["tensors"] = nlohmann::json::array();
  for (const auto& p : params_) {
    const std::string file = param_file_name(p.name);
    std::vector<std::uint32_t> shape(p.shape.begin(), p.shape.end());
    save_tensor(dir + "/" + file, make_tensor(shape, value(ParamId{static_cast<std::size_t>(&p - params_.data())})));
    list.push_back({{"name", p.name}, {"file", file}, {"shape", p.shape}, {"trainable", p.trainable}});
  }
  std::ofstream out(dir + "/manifest.json");
  require(out.good(), ErrorCode::kIo, "cannot write " + dir + "/manifest.json");
  out << manifest.dump(2) << '\n';
}

void ParamStore::load_checkpoint(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  require(in.good(), ErrorCode::kIo, "cannot open " + dir + "/manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kParse, dir + "/manifest.json: " + e.what());
  }
  require(manifest.value("format", "") == "a3r-checkpoint", ErrorCode::kParse, "not a checkpoint manifest");
  try {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& p = params_[i];
      const nlohmann::json* entry = nullptr;
      for (const auto& e : manifest.at("tensors")) {
        if (e.at("name") == p.name) entry = &e;
      }
      require(entry != nullptr, ErrorCode::kParse, "checkpoint has no tensor " + p.name);
      Tensor t = load_tensor(dir + "/" + entry->at("file").get<std::string>());
      std::vector<std::uint32_t> shape(p.shape.begin(), p.shape.end());
      require(t.shape == shape, ErrorCode::kDimension, "checkpoint shape mismatch for " + p.name);
      std::copy(t.values.begin(), t.values.end(), value(ParamId{i}).begin());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, dir + "/manifest.json: " + e.what());
  }
}

void orthogonal_init(std::span<double> w, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  require(w.size() == rows * cols, ErrorCode::kDimension, "orthogonal_init size mismatch");
  const bool transpose = rows < cols;
  const std::size_t r = transpose ? cols : rows;
  const std::size_t c = transpose ? rows : cols;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd rr = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < c; ++j) {
    if (rr(j, j) < 0) q.col(j) *= -1.0;
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) w[i * cols + j] = transpose ? q(j, i) : q(i, j);
  }
}

}  // namespace a3r
