#include <cmath>

#include "epigraph/error.hpp"
#include "epigraph/nn.hpp"

namespace epigraph::nn {

namespace {

enum HeadIndex { kTrunk = 0, kTransHidden, kTransOut, kQuatHidden, kQuatOut, kHeadCount };

LayerSpec linear(int in, int out, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::kLinear;
  s.in_dim = in;
  s.out_dim = out;
  s.heads = 1;
  s.activation = act;
  return s;
}

}  // namespace

DenseMatrix node_feature_matrix(const EpipolarGraph& g) { return DenseMatrix(g.node_features); }

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build_layers();
  Rng rng(seed);
  for (const auto& l : layers_) l->register_params(params_, rng);
  for (const auto& h : heads_) h->register_params(params_, rng);
}

Model::Model(const Model& other)
    : config_(other.config_), params_(other.params_), cache_(other.cache_), cached_(other.cached_) {
  build_layers();
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    config_ = other.config_;
    params_ = other.params_;
    cache_ = other.cache_;
    cached_ = other.cached_;
    build_layers();
  }
  return *this;
}

void Model::build_layers() {
  layers_.clear();
  heads_.clear();
  for (std::size_t l = 0; l < config_.layers.size(); ++l) {
    layers_.push_back(make_layer(config_.layers[l], "layers." + std::to_string(l)));
  }
  const int h = config_.hidden;
  const int f = config_.layers.back().out_dim;
  heads_.push_back(make_layer(linear(f, h, Activation::kRelu), "mlp1"));
  heads_.push_back(make_layer(linear(h, h, Activation::kRelu), "mlp2_1.0"));
  heads_.push_back(make_layer(linear(h, 4, Activation::kNone), "mlp2_1.1"));
  heads_.push_back(make_layer(linear(h, h, Activation::kRelu), "mlp2_2.0"));
  heads_.push_back(make_layer(linear(h, 4, Activation::kNone), "mlp2_2.1"));
}

PosePrediction Model::run(const DenseMatrix& X, const Propagation& prop, Cache* cache,
                          std::vector<DenseMatrix>* embeddings) const {
  if (X.rows() == 0) throw Error(ErrorCode::kEmptyGraph, "model input graph has no nodes");
  if (cache) {
    cache->layers.assign(layers_.size(), LayerCache{});
    cache->heads.assign(kHeadCount, LayerCache{});
    cache->num_nodes = static_cast<int>(X.rows());
  }
  DenseMatrix H = X;
  if (embeddings) embeddings->push_back(H);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    H = layers_[l]->forward(H, prop, params_, cache ? &cache->layers[l] : nullptr);
    if (embeddings) embeddings->push_back(H);
  }
  const DenseMatrix z = pool(H, config_.pooling);
  auto head = [&](int idx, const DenseMatrix& in) {
    return heads_[static_cast<std::size_t>(idx)]->forward(
        in, prop, params_, cache ? &cache->heads[static_cast<std::size_t>(idx)] : nullptr);
  };
  const DenseMatrix trunk = head(kTrunk, z);
  const DenseMatrix o_t = head(kTransOut, head(kTransHidden, trunk));
  const DenseMatrix o_q = head(kQuatOut, head(kQuatHidden, trunk));

  PosePrediction p;
  const Vec3 v(o_t(0, 0), o_t(0, 1), o_t(0, 2));
  const double nv = v.norm();
  p.t_dir = nv > 0.0 ? Vec3(v / nv) : Vec3::UnitZ();
  p.t_raw = softplus(o_t(0, 3));
  const Vec4 q(o_q(0, 0), o_q(0, 1), o_q(0, 2), o_q(0, 3));
  const double nq = q.norm();
  p.q = nq > 0.0 ? Vec4(q / nq) : Vec4(1, 0, 0, 0);
  if (cache) {
    cache->pooled = z;
    cache->o_q = q;
    cache->o_t = o_t.row(0).transpose();
  }
  return p;
}

PosePrediction Model::forward(const EpipolarGraph& g) {
  return forward(node_feature_matrix(g), Propagation::from_graph(g));
}

PosePrediction Model::forward(const DenseMatrix& X, const Propagation& prop) {
  cached_ = false;
  PosePrediction p = run(X, prop, &cache_, nullptr);
  cache_.prop = prop;
  cached_ = true;
  return p;
}

PosePrediction Model::predict(const EpipolarGraph& g) const {
  return run(node_feature_matrix(g), Propagation::from_graph(g), nullptr, nullptr);
}

PosePrediction Model::predict(const DenseMatrix& X, const Propagation& prop) const {
  return run(X, prop, nullptr, nullptr);
}

void Model::backward(const PredictionGrad& grad) {
  if (!cached_) throw Error(ErrorCode::kState, "backward() called without a cached forward pass");
  const Propagation& prop = cache_.prop;

  DenseMatrix do_q(1, 4);
  {
    const double nq = cache_.o_q.norm();
    const Vec4 q = cache_.o_q / nq;
    const Vec4 d = (grad.q - q * q.dot(grad.q)) / nq;
    do_q << d[0], d[1], d[2], d[3];
  }
  DenseMatrix do_t(1, 4);
  {
    const Vec3 v = cache_.o_t.head<3>();
    const double nv = v.norm();
    const Vec3 t = v / nv;
    const Vec3 d = (grad.t_dir - t * t.dot(grad.t_dir)) / nv;
    do_t << d[0], d[1], d[2], grad.t_raw * sigmoid(cache_.o_t[3]);
  }

  auto head_back = [&](int idx, const DenseMatrix& d) {
    return heads_[static_cast<std::size_t>(idx)]->backward(
        d, prop, cache_.heads[static_cast<std::size_t>(idx)], params_);
  };
  DenseMatrix d_trunk = head_back(kQuatHidden, head_back(kQuatOut, do_q));
  d_trunk += head_back(kTransHidden, head_back(kTransOut, do_t));
  const DenseMatrix dz = head_back(kTrunk, d_trunk);

  DenseMatrix dH = dz.replicate(cache_.num_nodes, 1);
  if (config_.pooling == Pooling::kMean) dH /= static_cast<double>(cache_.num_nodes);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    dH = layers_[l]->backward(dH, prop, cache_.layers[l], params_);
  }
  cached_ = false;
}

std::vector<DenseMatrix> Model::node_embeddings(const EpipolarGraph& g) const {
  std::vector<DenseMatrix> out;
  run(node_feature_matrix(g), Propagation::from_graph(g), nullptr, &out);
  return out;
}

DenseMatrix Model::pooled(const EpipolarGraph& g) const {
  const auto emb = node_embeddings(g);
  return pool(emb.back(), config_.pooling);
}

}  // namespace epigraph::nn
