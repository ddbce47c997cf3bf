#pragma once

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include "adapt3r/camera_geometry.hpp"
#include "adapt3r/error.hpp"

namespace testing {

inline a3r::RigidTransform random_transform(std::mt19937_64& rng, double max_translation = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-max_translation, max_translation);
  const Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  const double angle = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
  return a3r::RigidTransform::from_axis_angle(axis, angle, {u(rng), u(rng), u(rng)});
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("a3r_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

template <typename Fn>
a3r::ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const a3r::Error& e) {
    return e.code();
  }
  FAIL("expected an a3r::Error");
  return a3r::ErrorCode::kState;
}

}  // namespace testing
