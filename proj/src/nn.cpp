#include "adapt3r/nn.hpp"

#include "adapt3r/error.hpp"

namespace a3r {

MlpSpec add_mlp(ParamStore& store, const std::string& prefix, std::vector<std::size_t> dims, std::mt19937_64& rng) {
  require(dims.size() >= 2, ErrorCode::kInvalidArgument, "mlp needs at least input and output dims");
  MlpSpec spec;
  spec.dims = std::move(dims);
  for (std::size_t l = 0; l + 1 < spec.dims.size(); ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    const auto w = store.add(base + ".weight", {spec.dims[l + 1], spec.dims[l]});
    const auto b = store.add(base + ".bias", {spec.dims[l + 1]});
    orthogonal_init(store.value(w), spec.dims[l + 1], spec.dims[l], rng);
    spec.weights.push_back(w);
    spec.biases.push_back(b);
  }
  return spec;
}

MatD mlp_backward(const MlpWeights<double>& mlp, const MlpSpec& spec, const ParamStore& store,
                  const MlpCache<double>& cache, const MatD& dy, std::span<double> grad) {
  require(cache.inputs.size() == mlp.layers.size(), ErrorCode::kState, "mlp backward without a forward cache");
  MatD d = dy;
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    const auto& layer = mlp.layers[l];
    const auto& winfo = store.info(spec.weights[l]);
    const auto& binfo = store.info(spec.biases[l]);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dw(
        grad.data() + winfo.offset, layer.w.rows(), layer.w.cols());
    Eigen::Map<RowVec<double>> db(grad.data() + binfo.offset, layer.b.cols());
    dw.noalias() += d.transpose() * cache.inputs[l];
    db += d.colwise().sum();
    MatD dx = d * layer.w;
    if (l > 0) {
      const MatD& pre = cache.pre[l - 1];
      dx.array() *= pre.unaryExpr([](double v) { return silu_grad(v); }).array();
    }
    d = std::move(dx);
  }
  return d;
}

}  // namespace a3r
