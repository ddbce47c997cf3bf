#pragma once

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "adapt3r/params.hpp"

namespace a3r {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using MatD = Mat<double>;
using VecD = Vec<double>;

// SiLU: x * sigmoid(x). Smooth everywhere, so finite-difference checks have no kinks.
template <typename S>
inline S silu(S x) {
  return x / (S(1) + std::exp(-x));
}

template <typename S>
inline S silu_grad(S x) {
  const S s = S(1) / (S(1) + std::exp(-x));
  return s * (S(1) + x * (S(1) - s));
}

/// Parameter handles for a stack of dense layers with SiLU between layers.
struct MlpSpec {
  std::vector<std::size_t> dims;  // in, hidden..., out
  std::vector<ParamId> weights;   // (out x in) row-major
  std::vector<ParamId> biases;

  std::size_t in_dim() const { return dims.front(); }
  std::size_t out_dim() const { return dims.back(); }
};

/// Registers "<prefix>.l<i>.weight"/".bias" and initializes weights orthogonally, biases to zero.
MlpSpec add_mlp(ParamStore& store, const std::string& prefix, std::vector<std::size_t> dims, std::mt19937_64& rng);

template <typename S>
struct DenseWeights {
  Mat<S> w;     // out x in
  RowVec<S> b;  // 1 x out
};

template <typename S>
struct MlpWeights {
  std::vector<DenseWeights<S>> layers;
};

template <typename S>
MlpWeights<S> load_mlp(const ParamStore& store, const MlpSpec& spec) {
  MlpWeights<S> out;
  for (std::size_t l = 0; l + 1 < spec.dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec.dims[l]);
    const auto o = static_cast<Eigen::Index>(spec.dims[l + 1]);
    auto wv = store.value(spec.weights[l]);
    auto bv = store.value(spec.biases[l]);
    DenseWeights<S> d;
    d.w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(wv.data(), o, in)
              .template cast<S>();
    d.b = Eigen::Map<const RowVec<double>>(bv.data(), o).template cast<S>();
    out.layers.push_back(std::move(d));
  }
  return out;
}

template <typename S>
struct MlpCache {
  std::vector<Mat<S>> inputs;  // input to each layer (post-activation of the previous one)
  std::vector<Mat<S>> pre;     // pre-activation of each hidden layer
};

/// Rows of `x` are items. Last layer is linear.
template <typename S>
Mat<S> mlp_forward(const MlpWeights<S>& mlp, const Mat<S>& x, MlpCache<S>* cache = nullptr) {
  Mat<S> h = x;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    if (cache) cache->inputs.push_back(h);
    Mat<S> a = h * layer.w.transpose();
    a.rowwise() += layer.b;
    if (l + 1 < mlp.layers.size()) {
      if (cache) cache->pre.push_back(a);
      h = a.unaryExpr([](S v) { return silu(v); });
    } else {
      h = std::move(a);
    }
  }
  return h;
}

/// Same result layout as mlp_forward, but each row goes through its own matrix-vector
/// products from an aligned copy, so equal rows give bitwise-equal outputs.
template <typename S>
Mat<S> mlp_forward_rowwise(const MlpWeights<S>& mlp, const Mat<S>& x, MlpCache<S>* cache = nullptr) {
  Mat<S> h = x;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    if (cache) cache->inputs.push_back(h);
    Mat<S> a(h.rows(), layer.w.rows());
    Vec<S> in(h.cols());
    Vec<S> out(layer.w.rows());
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      in = h.row(i).transpose();
      out.noalias() = layer.w * in;
      out += layer.b.transpose();
      a.row(i) = out.transpose();
    }
    if (l + 1 < mlp.layers.size()) {
      if (cache) cache->pre.push_back(a);
      h = a.unaryExpr([](S v) { return silu(v); });
    } else {
      h = std::move(a);
    }
  }
  return h;
}

/// Accumulates parameter gradients into `grad` (flat, ParamStore layout) and returns dL/dx.
MatD mlp_backward(const MlpWeights<double>& mlp, const MlpSpec& spec, const ParamStore& store,
                  const MlpCache<double>& cache, const MatD& dy, std::span<double> grad);

}  // namespace a3r
