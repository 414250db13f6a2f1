#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "epigraph/graph.hpp"
#include "epigraph/loss.hpp"
#include "epigraph/text_io.hpp"

namespace epigraph::nn {

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LayerKind { kGCN, kGAT, kGIN, kLinear };
enum class Activation { kRelu, kTanh, kNone };
enum class Pooling { kMean, kSum };

const char* layer_kind_name(LayerKind k);
LayerKind parse_layer_kind(const std::string& s);
const char* activation_name(Activation a);
Activation parse_activation(const std::string& s);
const char* pooling_name(Pooling p);
Pooling parse_pooling(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::kGCN;
  int in_dim = 1;
  int out_dim = 1;
  int heads = 4;  // GAT only
  Activation activation = Activation::kRelu;
  bool bias = true;  // GCN and linear; GIN always has its MLP biases

  void validate() const;
  bool operator==(const LayerSpec&) const = default;
};

inline constexpr int kNodeFeatureDim = 6;

struct ModelConfig {
  std::vector<LayerSpec> layers;
  Pooling pooling = Pooling::kMean;
  int hidden = 64;     // width of the pose heads
  std::string preset;  // empty for an explicit stack

  /// Dimension chain, head count divisibility, nonempty stack. Throws
  /// Error(kConfig).
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::vector<std::string> preset_names();
/// "GAT+2GCN", "3GCN+GAT" or "GIN_SumPool"; throws Error(kConfig) otherwise.
ModelConfig make_preset(const std::string& name, int hidden = 64);

struct Tensor {
  std::string name;
  DenseMatrix value;
  DenseMatrix grad;
  DenseMatrix m;  // Adam first moment
  DenseMatrix v;  // Adam second moment
};

class ParamStore {
 public:
  Tensor& add(const std::string& name, int rows, int cols);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void scale_grad(double s);

  long step = 0;  // Adam step counter

 private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Message-passing topology derived from a graph. Structure is constant
/// under differentiation.
struct Propagation {
  int num_nodes = 0;
  std::vector<std::vector<std::pair<int, double>>> adjacency;  // A, no self-loops
  std::vector<std::vector<std::pair<int, double>>> gcn;        // D^-1/2 (A + I) D^-1/2
  std::vector<std::vector<int>> attention;                     // {i} then N(i)

  static Propagation from_edges(int num_nodes, const std::vector<Edge>& edges, bool symmetrize);
  static Propagation from_graph(const EpipolarGraph& g);
};

struct LayerCache {
  DenseMatrix input;
  DenseMatrix agg;        // aggregated input (GCN: A^ H, GIN: (1+eps) H + A H)
  DenseMatrix pre;        // pre-activation output
  DenseMatrix inner_pre;  // GIN hidden pre-activation
  DenseMatrix inner;      // GIN hidden activation
  DenseMatrix hw;         // GAT: H W
  std::vector<double> alpha;  // GAT attention, per head then per attention slot
  std::vector<double> logit;  // GAT pre-leaky logits, same layout
};

class Layer {
 public:
  Layer(LayerSpec spec, std::string prefix) : spec_(spec), prefix_(std::move(prefix)) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }

  virtual void register_params(ParamStore& params, Rng& rng) const = 0;
  /// Throws Error(kShape) if H has the wrong width or row count.
  virtual DenseMatrix forward(const DenseMatrix& H, const Propagation& g, const ParamStore& params,
                              LayerCache* cache) const = 0;
  /// Accumulates parameter gradients, returns dL/dH.
  virtual DenseMatrix backward(const DenseMatrix& d_out, const Propagation& g,
                               const LayerCache& cache, ParamStore& params) const = 0;

 protected:
  std::string name(const char* leaf) const { return prefix_ + "." + leaf; }
  void check_input(const DenseMatrix& H, const Propagation* g) const;

  LayerSpec spec_;
  std::string prefix_;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const std::string& prefix);

DenseMatrix apply_activation(Activation a, const DenseMatrix& Z);
/// d_out * sigma'(Z), elementwise.
DenseMatrix activation_backward(Activation a, const DenseMatrix& Z, const DenseMatrix& d_out);

/// Columnwise mean or sum, 1 x F. Throws Error(kEmptyGraph) for N == 0.
DenseMatrix pool(const DenseMatrix& H, Pooling mode);

double softplus(double x);
double sigmoid(double x);

class Model {
 public:
  explicit Model(ModelConfig config, std::uint64_t seed = 0);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Forward pass that caches activations for backward().
  PosePrediction forward(const EpipolarGraph& g);
  PosePrediction forward(const DenseMatrix& X, const Propagation& prop);
  /// Cache-free forward.
  PosePrediction predict(const EpipolarGraph& g) const;
  PosePrediction predict(const DenseMatrix& X, const Propagation& prop) const;

  /// Accumulates parameter gradients for the cached pass and releases the
  /// cache. Throws Error(kState) without a preceding forward().
  void backward(const PredictionGrad& grad);
  bool has_cache() const { return cached_; }

  /// H^(0) .. H^(L), H^(0) being the node features.
  std::vector<DenseMatrix> node_embeddings(const EpipolarGraph& g) const;
  DenseMatrix pooled(const EpipolarGraph& g) const;

 private:
  struct Cache {
    std::vector<LayerCache> layers;
    DenseMatrix pooled;
    std::vector<LayerCache> heads;  // trunk, t hidden, t out, q hidden, q out
    int num_nodes = 0;
    Vec4 o_q;
    Eigen::Matrix<double, 4, 1> o_t;
    Propagation prop;
  };

  PosePrediction run(const DenseMatrix& X, const Propagation& prop, Cache* cache,
                     std::vector<DenseMatrix>* embeddings) const;
  void build_layers();

  ModelConfig config_;
  ParamStore params_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::unique_ptr<Layer>> heads_;
  Cache cache_;
  bool cached_ = false;
};

DenseMatrix node_feature_matrix(const EpipolarGraph& g);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(ParamStore& params, const AdamOptions& options = {});

struct GradCheckEntry {
  std::string term;
  std::string tensor;
  double rel_error = 0.0;      // |a - n| / max(|a|, |n|, floor) over the whole tensor
  double max_elem_error = 0.0; // largest elementwise |a - n|
  std::size_t count = 0;
};

struct GradCheckOptions {
  double h = 1e-6;
  double tolerance = 1e-5;
  // Per tensor, with Euclidean norms: |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  bool corrupt = false;  // perturb one analytic entry (detector sanity)
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-5;

  double max_rel_error() const;
  bool passed() const { return max_rel_error() < tolerance; }
};

/// Generic engine. `values` evaluates every objective at the current
/// parameters; `analytic(k)` fills the parameter gradients of objective k.
GradCheckReport check_gradients(ParamStore& params, const std::vector<std::string>& terms,
                                const std::function<std::vector<double>()>& values,
                                const std::function<void(std::size_t)>& analytic,
                                const GradCheckOptions& options = {});

/// Every loss term against every model tensor.
GradCheckReport grad_check(Model& model, const EpipolarGraph& g, const Pose& gt,
                           const LossOptions& loss_options = {},
                           const GradCheckOptions& options = {});

struct Checkpoint {
  Model model;
  std::map<std::string, std::string> meta;
};

std::string format_checkpoint(const Model& model, const std::map<std::string, std::string>& meta = {});
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace epigraph::nn
