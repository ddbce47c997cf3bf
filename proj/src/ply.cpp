#include "adapt3r/ply.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "adapt3r/error.hpp"

namespace a3r {
namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> colors_for(std::span<const double> rgb, std::span<const double> features, std::size_t d,
                                     PlyColor color) {
  if (color == PlyColor::kFeaturePca) return feature_pca_colors(features, d);
  std::vector<std::uint8_t> out(rgb.size());
  std::transform(rgb.begin(), rgb.end(), out.begin(), to_byte);
  return out;
}

}  // namespace

std::vector<std::uint8_t> feature_pca_colors(std::span<const double> features, std::size_t d) {
  require(d > 0 && features.size() % d == 0, ErrorCode::kDimension, "feature array is not a multiple of d");
  const auto n = static_cast<Eigen::Index>(features.size() / d);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n) * 3, 0);
  if (n == 0) return out;
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> f(features.data(), n, static_cast<Eigen::Index>(d));
  const Eigen::MatrixXd centered = f.rowwise() - f.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index k = std::min<Eigen::Index>(3, static_cast<Eigen::Index>(d));
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::VectorXd axis = eig.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    const Eigen::VectorXd proj = centered * axis;
    const double lo = proj.minCoeff();
    const double span = proj.maxCoeff() - lo;
    for (Eigen::Index i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(3 * i + c)] = to_byte(span > 0 ? (proj(i) - lo) / span : 0.5);
    }
  }
  return out;
}

PlyCloud make_ply_cloud(const FeatureCloud& cloud, PlyColor color) {
  std::vector<double> rgb, feats;
  PlyCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.valid[i]) continue;
    out.points.insert(out.points.end(), cloud.points.begin() + 3 * i, cloud.points.begin() + 3 * i + 3);
    rgb.insert(rgb.end(), cloud.colors.begin() + 3 * i, cloud.colors.begin() + 3 * i + 3);
    feats.insert(feats.end(), cloud.features.begin() + cloud.d * i, cloud.features.begin() + cloud.d * (i + 1));
  }
  out.colors = colors_for(rgb, feats, cloud.d, color);
  return out;
}

PlyCloud make_ply_cloud(const DownsampledCloud& cloud, PlyColor color, std::optional<std::span<const double>> attention) {
  PlyCloud out;
  out.points = cloud.points;
  out.colors = colors_for(cloud.colors, cloud.features, cloud.d, color);
  if (attention) {
    require(attention->size() == cloud.size(), ErrorCode::kDimension, "attention length != sampled point count");
    out.attention.emplace(attention->begin(), attention->end());
  }
  return out;
}

std::string ply_to_string(const PlyCloud& cloud) {
  const std::size_t n = cloud.size();
  require(cloud.colors.size() == 3 * n, ErrorCode::kDimension, "PLY colors do not match points");
  require(!cloud.attention || cloud.attention->size() == n, ErrorCode::kDimension, "PLY attention does not match points");
  std::ostringstream os;
  os << "ply\nformat ascii 1.0\nelement vertex " << n << '\n'
     << "property float x\nproperty float y\nproperty float z\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.attention) os << "property float attention\n";
  os << "end_header\n";
  os.precision(9);
  for (std::size_t i = 0; i < n; ++i) {
    os << cloud.points[3 * i] << ' ' << cloud.points[3 * i + 1] << ' ' << cloud.points[3 * i + 2] << ' '
       << int{cloud.colors[3 * i]} << ' ' << int{cloud.colors[3 * i + 1]} << ' ' << int{cloud.colors[3 * i + 2]};
    if (cloud.attention) os << ' ' << (*cloud.attention)[i];
    os << '\n';
  }
  return os.str();
}

void write_ply(const std::string& path, const PlyCloud& cloud) {
  const std::string text = ply_to_string(cloud);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << text;
  require(out.good(), ErrorCode::kIo, "write failed: " + path);
}

}  // namespace a3r
