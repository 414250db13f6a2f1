#include <cmath>
#include <map>

#include "epigraph/error.hpp"
#include "epigraph/nn.hpp"

namespace epigraph::nn {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kGCN: return "gcn";
    case LayerKind::kGAT: return "gat";
    case LayerKind::kGIN: return "gin";
    case LayerKind::kLinear: return "linear";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  if (s == "gcn" || s == "GCN") return LayerKind::kGCN;
  if (s == "gat" || s == "GAT") return LayerKind::kGAT;
  if (s == "gin" || s == "GIN") return LayerKind::kGIN;
  if (s == "linear" || s == "mlp") return LayerKind::kLinear;
  throw Error(ErrorCode::kConfig, "unknown layer kind '" + s + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kNone: return "none";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "none") return Activation::kNone;
  throw Error(ErrorCode::kConfig, "unknown activation '" + s + "'");
}

const char* pooling_name(Pooling p) { return p == Pooling::kMean ? "mean" : "sum"; }

Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::kMean;
  if (s == "sum") return Pooling::kSum;
  throw Error(ErrorCode::kConfig, "unknown pooling '" + s + "'");
}

void LayerSpec::validate() const {
  if (in_dim < 1 || out_dim < 1) throw Error(ErrorCode::kConfig, "layer dimensions must be >= 1");
  if (kind == LayerKind::kGAT) {
    if (heads < 1) throw Error(ErrorCode::kConfig, "GAT heads must be >= 1");
    if (out_dim % heads != 0) {
      throw Error(ErrorCode::kConfig, "GAT out_dim " + std::to_string(out_dim) +
                                          " is not divisible by heads " + std::to_string(heads));
    }
  }
}

void ModelConfig::validate() const {
  if (layers.empty()) throw Error(ErrorCode::kConfig, "model needs at least one layer");
  if (hidden < 1) throw Error(ErrorCode::kConfig, "hidden width must be >= 1");
  int in = kNodeFeatureDim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate();
    if (layers[l].in_dim != in) {
      throw Error(ErrorCode::kConfig, "layer " + std::to_string(l) + " expects in_dim " +
                                          std::to_string(layers[l].in_dim) + " but receives " +
                                          std::to_string(in));
    }
    in = layers[l].out_dim;
  }
}

std::vector<std::string> preset_names() { return {"GAT+2GCN", "3GCN+GAT", "GIN_SumPool"}; }

ModelConfig make_preset(const std::string& name, int hidden) {
  auto layer = [&](LayerKind kind, int in) {
    LayerSpec s;
    s.kind = kind;
    s.in_dim = in;
    s.out_dim = hidden;
    s.heads = kind == LayerKind::kGAT ? 4 : 1;
    return s;
  };
  ModelConfig c;
  c.hidden = hidden;
  c.preset = name;
  if (name == "GAT+2GCN") {
    c.layers = {layer(LayerKind::kGAT, kNodeFeatureDim), layer(LayerKind::kGCN, hidden),
                layer(LayerKind::kGCN, hidden)};
  } else if (name == "3GCN+GAT") {
    c.layers = {layer(LayerKind::kGCN, kNodeFeatureDim), layer(LayerKind::kGCN, hidden),
                layer(LayerKind::kGCN, hidden), layer(LayerKind::kGAT, hidden)};
  } else if (name == "GIN_SumPool") {
    c.layers = {layer(LayerKind::kGIN, kNodeFeatureDim), layer(LayerKind::kGIN, hidden),
                layer(LayerKind::kGIN, hidden)};
    c.pooling = Pooling::kSum;
  } else {
    throw Error(ErrorCode::kConfig, "unknown model preset '" + name + "'");
  }
  c.validate();
  return c;
}

Tensor& ParamStore::add(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw Error(ErrorCode::kState, "duplicate parameter '" + name + "'");
  Tensor t;
  t.name = name;
  t.value = DenseMatrix::Zero(rows, cols);
  t.grad = DenseMatrix::Zero(rows, cols);
  t.m = DenseMatrix::Zero(rows, cols);
  t.v = DenseMatrix::Zero(rows, cols);
  index_[name] = tensors_.size();
  tensors_.push_back(std::move(t));
  return tensors_.back();
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::kState, "no parameter '" + name + "'");
  return tensors_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::kState, "no parameter '" + name + "'");
  return tensors_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.grad.setZero();
}

void ParamStore::scale_grad(double s) {
  for (auto& t : tensors_) t.grad *= s;
}

Propagation Propagation::from_edges(int num_nodes, const std::vector<Edge>& edges, bool symmetrize) {
  Propagation p;
  p.num_nodes = num_nodes;
  std::vector<std::map<int, double>> rows(static_cast<std::size_t>(num_nodes));
  for (const Edge& e : edges) {
    if (e.src < 0 || e.dst < 0 || e.src >= num_nodes || e.dst >= num_nodes) {
      throw Error(ErrorCode::kShape, "edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                                         " outside " + std::to_string(num_nodes) + " nodes");
    }
    if (e.src == e.dst) continue;
    rows[static_cast<std::size_t>(e.src)][e.dst] = e.weight;
  }
  if (symmetrize) {
    for (const Edge& e : edges) {
      if (e.src == e.dst) continue;
      rows[static_cast<std::size_t>(e.dst)].emplace(e.src, e.weight);
    }
  }
  p.adjacency.resize(static_cast<std::size_t>(num_nodes));
  p.gcn.resize(static_cast<std::size_t>(num_nodes));
  p.attention.resize(static_cast<std::size_t>(num_nodes));
  std::vector<double> degree(static_cast<std::size_t>(num_nodes), 1.0);
  for (int i = 0; i < num_nodes; ++i) {
    for (const auto& [j, w] : rows[static_cast<std::size_t>(i)]) {
      p.adjacency[static_cast<std::size_t>(i)].emplace_back(j, w);
      degree[static_cast<std::size_t>(i)] += w;
    }
  }
  for (int i = 0; i < num_nodes; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    p.gcn[ui].emplace_back(i, 1.0 / degree[ui]);
    p.attention[ui].push_back(i);
    for (const auto& [j, w] : p.adjacency[ui]) {
      p.gcn[ui].emplace_back(j, w / std::sqrt(degree[ui] * degree[static_cast<std::size_t>(j)]));
      p.attention[ui].push_back(j);
    }
  }
  return p;
}

Propagation Propagation::from_graph(const EpipolarGraph& g) {
  return from_edges(g.num_nodes(), g.edges, g.meta.symmetrize);
}

DenseMatrix apply_activation(Activation a, const DenseMatrix& Z) {
  switch (a) {
    case Activation::kRelu: return Z.cwiseMax(0.0);
    case Activation::kTanh: return Z.array().tanh().matrix();
    case Activation::kNone: return Z;
  }
  return Z;
}

DenseMatrix activation_backward(Activation a, const DenseMatrix& Z, const DenseMatrix& d_out) {
  switch (a) {
    case Activation::kRelu:
      return (Z.array() > 0.0).select(d_out, DenseMatrix::Zero(Z.rows(), Z.cols()));
    case Activation::kTanh: {
      const auto th = Z.array().tanh();
      return (d_out.array() * (1.0 - th * th)).matrix();
    }
    case Activation::kNone: return d_out;
  }
  return d_out;
}

DenseMatrix pool(const DenseMatrix& H, Pooling mode) {
  if (H.rows() == 0) throw Error(ErrorCode::kEmptyGraph, "cannot pool an empty node set");
  DenseMatrix z = H.colwise().sum();
  if (mode == Pooling::kMean) z /= static_cast<double>(H.rows());
  return z;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void adam_step(ParamStore& params, const AdamOptions& o) {
  ++params.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(params.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(params.step));
  for (Tensor& t : params.tensors()) {
    t.m = o.beta1 * t.m + (1.0 - o.beta1) * t.grad;
    t.v = o.beta2 * t.v + (1.0 - o.beta2) * t.grad.cwiseAbs2();
    const auto m_hat = t.m.array() / c1;
    const auto v_hat = t.v.array() / c2;
    t.value.array() -= o.lr * m_hat / (v_hat.sqrt() + o.eps);
  }
}

}  // namespace epigraph::nn
