#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "epigraph/error.hpp"
#include "epigraph/nn.hpp"

namespace epigraph::nn {

namespace {

constexpr double kLeakySlope = 0.2;

void init_uniform(Tensor& t, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = u(rng);
}

// Dense MLP weights: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_fan_in(Tensor& t, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(t.value.rows()));
  std::uniform_real_distribution<double> u(-a, a);
  for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = u(rng);
}

std::vector<std::size_t> slot_offsets(const Propagation& g) {
  std::vector<std::size_t> base(g.attention.size() + 1, 0);
  for (std::size_t i = 0; i < g.attention.size(); ++i) base[i + 1] = base[i] + g.attention[i].size();
  return base;
}

DenseMatrix propagate(const std::vector<std::vector<std::pair<int, double>>>& rows,
                      const DenseMatrix& H) {
  DenseMatrix out = DenseMatrix::Zero(H.rows(), H.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [j, w] : rows[i]) out.row(static_cast<Eigen::Index>(i)) += w * H.row(j);
  }
  return out;
}

DenseMatrix propagate_transposed(const std::vector<std::vector<std::pair<int, double>>>& rows,
                                 const DenseMatrix& D) {
  DenseMatrix out = DenseMatrix::Zero(D.rows(), D.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [j, w] : rows[i]) out.row(j) += w * D.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

class GcnLayer final : public Layer {
 public:
  using Layer::Layer;

  void register_params(ParamStore& params, Rng& rng) const override {
    init_fan_in(params.add(name("weight"), spec_.in_dim, spec_.out_dim), rng);
    if (spec_.bias) params.add(name("bias"), 1, spec_.out_dim);
  }

  DenseMatrix forward(const DenseMatrix& H, const Propagation& g, const ParamStore& params,
                      LayerCache* cache) const override {
    check_input(H, &g);
    if (cache) cache->input = H;
    DenseMatrix agg = propagate(g.gcn, H);
    DenseMatrix Z = agg * params.at(name("weight")).value;
    if (spec_.bias) Z.rowwise() += params.at(name("bias")).value.row(0);
    DenseMatrix out = apply_activation(spec_.activation, Z);
    if (cache) {
      cache->agg = std::move(agg);
      cache->pre = std::move(Z);
    }
    return out;
  }

  DenseMatrix backward(const DenseMatrix& d_out, const Propagation& g, const LayerCache& cache,
                       ParamStore& params) const override {
    const DenseMatrix dZ = activation_backward(spec_.activation, cache.pre, d_out);
    Tensor& W = params.at(name("weight"));
    W.grad.noalias() += cache.agg.transpose() * dZ;
    if (spec_.bias) params.at(name("bias")).grad += dZ.colwise().sum();
    return propagate_transposed(g.gcn, dZ * W.value.transpose());
  }
};

class LinearLayer final : public Layer {
 public:
  using Layer::Layer;

  void register_params(ParamStore& params, Rng& rng) const override {
    init_fan_in(params.add(name("weight"), spec_.in_dim, spec_.out_dim), rng);
    if (spec_.bias) params.add(name("bias"), 1, spec_.out_dim);
  }

  DenseMatrix forward(const DenseMatrix& H, const Propagation&, const ParamStore& params,
                      LayerCache* cache) const override {
    check_input(H, nullptr);
    if (cache) cache->input = H;
    DenseMatrix Z = H * params.at(name("weight")).value;
    if (spec_.bias) Z.rowwise() += params.at(name("bias")).value.row(0);
    DenseMatrix out = apply_activation(spec_.activation, Z);
    if (cache) cache->pre = std::move(Z);
    return out;
  }

  DenseMatrix backward(const DenseMatrix& d_out, const Propagation&, const LayerCache& cache,
                       ParamStore& params) const override {
    const DenseMatrix dZ = activation_backward(spec_.activation, cache.pre, d_out);
    Tensor& W = params.at(name("weight"));
    W.grad.noalias() += cache.input.transpose() * dZ;
    if (spec_.bias) params.at(name("bias")).grad += dZ.colwise().sum();
    return dZ * W.value.transpose();
  }
};

class GatLayer final : public Layer {
 public:
  using Layer::Layer;

  void register_params(ParamStore& params, Rng& rng) const override {
    init_uniform(params.add(name("weight"), spec_.in_dim, spec_.out_dim), rng);
    const int fh = spec_.out_dim / spec_.heads;
    init_uniform(params.add(name("att_self"), spec_.heads, fh), rng);
    init_uniform(params.add(name("att_nbr"), spec_.heads, fh), rng);
  }

  DenseMatrix forward(const DenseMatrix& H, const Propagation& g, const ParamStore& params,
                      LayerCache* cache) const override {
    check_input(H, &g);
    if (cache) cache->input = H;
    const int heads = spec_.heads;
    const int fh = spec_.out_dim / heads;
    const DenseMatrix HW = H * params.at(name("weight")).value;
    const DenseMatrix& a_self = params.at(name("att_self")).value;
    const DenseMatrix& a_nbr = params.at(name("att_nbr")).value;
    const auto base = slot_offsets(g);
    const std::size_t slots = base.back();
    std::vector<double> alpha(slots * static_cast<std::size_t>(heads));
    std::vector<double> logit(alpha.size());
    DenseMatrix Z = DenseMatrix::Zero(H.rows(), spec_.out_dim);

    for (int k = 0; k < heads; ++k) {
      const auto block = HW.middleCols(k * fh, fh);
      const Eigen::VectorXd s_self = block * a_self.row(k).transpose();
      const Eigen::VectorXd s_nbr = block * a_nbr.row(k).transpose();
      for (std::size_t i = 0; i < g.attention.size(); ++i) {
        const auto& nb = g.attention[i];
        const std::size_t off = static_cast<std::size_t>(k) * slots + base[i];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < nb.size(); ++s) {
          const double e = s_self[static_cast<Eigen::Index>(i)] + s_nbr[nb[s]];
          logit[off + s] = e;
          const double l = e > 0.0 ? e : kLeakySlope * e;
          alpha[off + s] = l;
          mx = std::max(mx, l);
        }
        double sum = 0.0;
        for (std::size_t s = 0; s < nb.size(); ++s) {
          alpha[off + s] = std::exp(alpha[off + s] - mx);
          sum += alpha[off + s];
        }
        for (std::size_t s = 0; s < nb.size(); ++s) {
          alpha[off + s] /= sum;
          Z.row(static_cast<Eigen::Index>(i)).segment(k * fh, fh) += alpha[off + s] * block.row(nb[s]);
        }
      }
    }
    DenseMatrix out = apply_activation(spec_.activation, Z);
    if (cache) {
      cache->hw = HW;
      cache->pre = std::move(Z);
      cache->alpha = std::move(alpha);
      cache->logit = std::move(logit);
    }
    return out;
  }

  DenseMatrix backward(const DenseMatrix& d_out, const Propagation& g, const LayerCache& cache,
                       ParamStore& params) const override {
    const int heads = spec_.heads;
    const int fh = spec_.out_dim / heads;
    const DenseMatrix dZ = activation_backward(spec_.activation, cache.pre, d_out);
    Tensor& W = params.at(name("weight"));
    Tensor& a_self = params.at(name("att_self"));
    Tensor& a_nbr = params.at(name("att_nbr"));
    const auto base = slot_offsets(g);
    const std::size_t slots = base.back();
    DenseMatrix dHW = DenseMatrix::Zero(cache.hw.rows(), cache.hw.cols());

    std::vector<double> d_alpha;
    for (int k = 0; k < heads; ++k) {
      const auto block = cache.hw.middleCols(k * fh, fh);
      const Eigen::RowVectorXd as = a_self.value.row(k);
      const Eigen::RowVectorXd an = a_nbr.value.row(k);
      for (std::size_t i = 0; i < g.attention.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto& nb = g.attention[i];
        const std::size_t off = static_cast<std::size_t>(k) * slots + base[i];
        const Eigen::RowVectorXd dz = dZ.row(ii).segment(k * fh, fh);
        d_alpha.assign(nb.size(), 0.0);
        double weighted = 0.0;
        for (std::size_t s = 0; s < nb.size(); ++s) {
          const double a = cache.alpha[off + s];
          dHW.row(nb[s]).segment(k * fh, fh) += a * dz;
          d_alpha[s] = dz.dot(block.row(nb[s]));
          weighted += a * d_alpha[s];
        }
        for (std::size_t s = 0; s < nb.size(); ++s) {
          const double de = cache.alpha[off + s] * (d_alpha[s] - weighted);
          const double dl = de * (cache.logit[off + s] > 0.0 ? 1.0 : kLeakySlope);
          a_self.grad.row(k) += dl * block.row(ii);
          a_nbr.grad.row(k) += dl * block.row(nb[s]);
          dHW.row(ii).segment(k * fh, fh) += dl * as;
          dHW.row(nb[s]).segment(k * fh, fh) += dl * an;
        }
      }
    }
    W.grad.noalias() += cache.input.transpose() * dHW;
    return dHW * W.value.transpose();
  }
};

class GinLayer final : public Layer {
 public:
  using Layer::Layer;

  void register_params(ParamStore& params, Rng& rng) const override {
    params.add(name("eps"), 1, 1);
    init_fan_in(params.add(name("weight"), spec_.in_dim, spec_.out_dim), rng);
    params.add(name("bias"), 1, spec_.out_dim);
    init_fan_in(params.add(name("weight2"), spec_.out_dim, spec_.out_dim), rng);
    params.add(name("bias2"), 1, spec_.out_dim);
  }

  DenseMatrix forward(const DenseMatrix& H, const Propagation& g, const ParamStore& params,
                      LayerCache* cache) const override {
    check_input(H, &g);
    if (cache) cache->input = H;
    const double eps = params.at(name("eps")).value(0, 0);
    DenseMatrix M = (1.0 + eps) * H + propagate(g.adjacency, H);
    DenseMatrix Z1 = M * params.at(name("weight")).value;
    Z1.rowwise() += params.at(name("bias")).value.row(0);
    DenseMatrix A1 = Z1.cwiseMax(0.0);
    DenseMatrix Z2 = A1 * params.at(name("weight2")).value;
    Z2.rowwise() += params.at(name("bias2")).value.row(0);
    DenseMatrix out = apply_activation(spec_.activation, Z2);
    if (cache) {
      cache->agg = std::move(M);
      cache->inner_pre = std::move(Z1);
      cache->inner = std::move(A1);
      cache->pre = std::move(Z2);
    }
    return out;
  }

  DenseMatrix backward(const DenseMatrix& d_out, const Propagation& g, const LayerCache& cache,
                       ParamStore& params) const override {
    const DenseMatrix dZ2 = activation_backward(spec_.activation, cache.pre, d_out);
    Tensor& W2 = params.at(name("weight2"));
    W2.grad.noalias() += cache.inner.transpose() * dZ2;
    params.at(name("bias2")).grad += dZ2.colwise().sum();
    const DenseMatrix dZ1 =
        activation_backward(Activation::kRelu, cache.inner_pre, dZ2 * W2.value.transpose());
    Tensor& W1 = params.at(name("weight"));
    W1.grad.noalias() += cache.agg.transpose() * dZ1;
    params.at(name("bias")).grad += dZ1.colwise().sum();
    const DenseMatrix dM = dZ1 * W1.value.transpose();
    Tensor& eps = params.at(name("eps"));
    eps.grad(0, 0) += dM.cwiseProduct(cache.input).sum();
    return (1.0 + eps.value(0, 0)) * dM + propagate_transposed(g.adjacency, dM);
  }
};

}  // namespace

void Layer::check_input(const DenseMatrix& H, const Propagation* g) const {
  if (H.cols() != spec_.in_dim) {
    throw Error(ErrorCode::kShape, prefix_ + ": input has " + std::to_string(H.cols()) +
                                       " columns, expected " + std::to_string(spec_.in_dim));
  }
  if (g && H.rows() != g->num_nodes) {
    throw Error(ErrorCode::kShape, prefix_ + ": input has " + std::to_string(H.rows()) +
                                       " rows for a graph of " + std::to_string(g->num_nodes) +
                                       " nodes");
  }
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const std::string& prefix) {
  spec.validate();
  switch (spec.kind) {
    case LayerKind::kGCN: return std::make_unique<GcnLayer>(spec, prefix);
    case LayerKind::kGAT: return std::make_unique<GatLayer>(spec, prefix);
    case LayerKind::kGIN: return std::make_unique<GinLayer>(spec, prefix);
    case LayerKind::kLinear: return std::make_unique<LinearLayer>(spec, prefix);
  }
  throw Error(ErrorCode::kConfig, "unknown layer kind");
}

}  // namespace epigraph::nn
