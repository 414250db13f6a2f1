#include "epigraph/config.hpp"

#include <cstdlib>
#include <set>

#include <json.hpp>

#include "epigraph/error.hpp"
#include "epigraph/text_io.hpp"

namespace epigraph {

using Json = nlohmann::ordered_json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::kConfig, msg); }

// Walks one JSON object, rejecting keys that no reader asked for.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error("'" + path_ + "' must be an object");
  }
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) config_error("unknown config key '" + where(it.key()) + "'");
    }
  }

  template <class T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      dst = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      config_error("config key '" + where(key) + "' has the wrong type");
    }
  }

  void get_u64(const char* key, std::uint64_t& dst) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
      config_error("config key '" + where(key) + "' must be a nonnegative integer");
    }
    dst = it->get<std::uint64_t>();
  }

  bool has(const char* key) const { return j_.contains(key); }
  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto config_call(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, e.what());
  }
}

const char* sampson_name(SampsonDenominator d) {
  return d == SampsonDenominator::kFullNorm ? "full-norm" : "two-component";
}

SampsonDenominator parse_sampson(const std::string& s) {
  if (s == "two-component") return SampsonDenominator::kTwoComponent;
  if (s == "full-norm") return SampsonDenominator::kFullNorm;
  config_error("unknown Sampson denominator '" + s + "'");
}

Json layer_json(const nn::LayerSpec& l) {
  Json j;
  j["kind"] = nn::layer_kind_name(l.kind);
  j["in"] = l.in_dim;
  j["out"] = l.out_dim;
  j["heads"] = l.heads;
  j["activation"] = nn::activation_name(l.activation);
  j["bias"] = l.bias;
  return j;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;

  const DatasetConfig& d = c.dataset;
  Json ds;
  ds["source"] = d.source;
  ds["root"] = d.root;
  ds["sequence"] = d.sequence;
  ds["motion"] = motion_model_name(d.motion);
  ds["frames"] = d.frames;
  ds["fps"] = d.trajectory.fps;
  ds["step"] = d.trajectory.step;
  ds["yaw_rate"] = d.trajectory.yaw_rate;
  ds["jitter_rot"] = d.trajectory.jitter_rot;
  ds["jitter_trans"] = d.trajectory.jitter_trans;
  ds["n_points"] = d.n_points;
  ds["depth_min"] = d.depth_min;
  ds["depth_max"] = d.depth_max;
  ds["noise_px"] = d.noise_px;
  ds["outlier_fraction"] = d.outlier_fraction;
  ds["intrinsics"] = {{"fx", d.intrinsics.fx}, {"fy", d.intrinsics.fy},
                      {"cx", d.intrinsics.cx}, {"cy", d.intrinsics.cy}};
  ds["image"] = {{"width", d.image.width}, {"height", d.image.height}};
  ds["spacing"] = d.spacing;
  j["dataset"] = ds;

  const GraphOptions& g = c.graph;
  j["graph"] = {{"k", g.k},
                {"tau", g.tau},
                {"variant", knn_variant_name(g.variant)},
                {"symmetrize", g.symmetrize},
                {"second_image", g.second_image},
                {"radius", g.radius},
                {"e0_seed_size", g.e0.seed_size},
                {"e0_iterations", g.e0.iterations},
                {"e0_seed", g.e0.seed},
                {"sampson", sampson_name(g.e0.denominator)}};

  Json m;
  if (!c.model.preset.empty()) {
    m["preset"] = c.model.preset;
  } else {
    Json layers = Json::array();
    for (const auto& l : c.model.layers) layers.push_back(layer_json(l));
    m["layers"] = layers;
    m["pooling"] = nn::pooling_name(c.model.pooling);
  }
  m["hidden"] = c.model.hidden;
  j["model"] = m;

  j["train"] = {{"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"epochs", c.train.epochs},
                {"split", c.train.split},
                {"prebuild_workers", c.train.prebuild_workers},
                {"output_dir", c.train.output_dir}};
  j["loss"] = {{"pose", c.weights.pose},
               {"frob", c.weights.frob},
               {"svd", c.weights.svd},
               {"yaw", c.weights.yaw},
               {"quat_norm", c.loss.quat_norm == QuatNorm::kL1 ? "l1" : "l2"},
               {"unit_essential", c.loss.unit_essential}};
  j["eval"] = {{"spacings", c.eval.spacings},     {"output_dir", c.eval.output_dir},
               {"checkpoint", c.eval.checkpoint}, {"baseline", c.eval.baseline},
               {"align", c.eval.align},           {"gt_scale", c.eval.gt_scale}};
  j["gradcheck"] = {{"presets", c.gradcheck.presets}, {"nodes", c.gradcheck.nodes},
                    {"hidden", c.gradcheck.hidden},   {"tolerance", c.gradcheck.tolerance},
                    {"h", c.gradcheck.h},             {"corrupt", c.gradcheck.corrupt}};
  j["bench"] = {{"presets", c.bench.presets},
                {"variants", c.bench.variants},
                {"epochs", c.bench.epochs},
                {"output_dir", c.bench.output_dir}};
  return j;
}

nn::ModelConfig read_model(const Json& j) {
  Section s(j, "model");
  std::string preset;
  int hidden = 64;
  std::string pooling;
  s.get("preset", preset);
  s.get("hidden", hidden);
  s.get("pooling", pooling);
  const Json* layers = s.child("layers");
  s.done();
  if (layers && s.has("preset")) {
    config_error("model.preset and model.layers are mutually exclusive");
  }
  if (hidden < 1) config_error("model.hidden must be >= 1");
  if (!layers) {
    if (preset.empty()) preset = "GAT+2GCN";
    nn::ModelConfig c = config_call([&] { return nn::make_preset(preset, hidden); });
    if (!pooling.empty() && config_call([&] { return nn::parse_pooling(pooling); }) != c.pooling) {
      config_error("model.pooling conflicts with preset '" + preset + "'");
    }
    return c;
  }
  if (!layers->is_array()) config_error("model.layers must be an array");
  nn::ModelConfig c;
  c.preset.clear();
  c.hidden = hidden;
  c.layers.clear();
  if (!pooling.empty()) c.pooling = config_call([&] { return nn::parse_pooling(pooling); });
  for (std::size_t i = 0; i < layers->size(); ++i) {
    Section ls((*layers)[i], "model.layers[" + std::to_string(i) + "]");
    std::string kind = "gcn", act = "relu";
    nn::LayerSpec spec;
    ls.get("kind", kind);
    ls.get("in", spec.in_dim);
    ls.get("out", spec.out_dim);
    spec.heads = 1;
    ls.get("heads", spec.heads);
    ls.get("activation", act);
    ls.get("bias", spec.bias);
    ls.done();
    spec.kind = config_call([&] { return nn::parse_layer_kind(kind); });
    spec.activation = config_call([&] { return nn::parse_activation(act); });
    c.layers.push_back(spec);
  }
  config_call([&] {
    c.validate();
    return 0;
  });
  return c;
}

ExperimentConfig from_json(const Json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.get_u64("seed", c.seed);

  if (const Json* ds = root.child("dataset")) {
    Section s(*ds, "dataset");
    DatasetConfig& d = c.dataset;
    std::string motion = motion_model_name(d.motion);
    s.get("source", d.source);
    s.get("root", d.root);
    s.get("sequence", d.sequence);
    s.get("motion", motion);
    s.get("frames", d.frames);
    s.get("fps", d.trajectory.fps);
    s.get("step", d.trajectory.step);
    s.get("yaw_rate", d.trajectory.yaw_rate);
    s.get("jitter_rot", d.trajectory.jitter_rot);
    s.get("jitter_trans", d.trajectory.jitter_trans);
    s.get("n_points", d.n_points);
    s.get("depth_min", d.depth_min);
    s.get("depth_max", d.depth_max);
    s.get("noise_px", d.noise_px);
    s.get("outlier_fraction", d.outlier_fraction);
    s.get("spacing", d.spacing);
    if (const Json* k = s.child("intrinsics")) {
      Section ks(*k, "dataset.intrinsics");
      ks.get("fx", d.intrinsics.fx);
      ks.get("fy", d.intrinsics.fy);
      ks.get("cx", d.intrinsics.cx);
      ks.get("cy", d.intrinsics.cy);
      ks.done();
    }
    if (const Json* im = s.child("image")) {
      Section is(*im, "dataset.image");
      is.get("width", d.image.width);
      is.get("height", d.image.height);
      is.done();
    }
    s.done();
    d.motion = config_call([&] { return parse_motion_model(motion); });
    if (d.source != "synthetic" && d.source != "files") {
      config_error("dataset.source must be 'synthetic' or 'files'");
    }
    if (d.frames < 2) config_error("dataset.frames must be >= 2");
    if (!(d.trajectory.fps > 0.0)) config_error("dataset.fps must be > 0");
    if (d.n_points < 8) config_error("dataset.n_points must be >= 8");
    if (!(d.outlier_fraction >= 0.0 && d.outlier_fraction < 1.0)) {
      config_error("dataset.outlier_fraction must be in [0, 1)");
    }
    if (!(d.depth_min > 0.0 && d.depth_max > d.depth_min)) {
      config_error("dataset depth range must satisfy 0 < depth_min < depth_max");
    }
    if (d.image.width < 1 || d.image.height < 1) config_error("dataset.image must be positive");
    config_call([&] {
      d.intrinsics.validate();
      return 0;
    });
    if (!(d.spacing > 0.0)) config_error("dataset.spacing must be > 0");
  }

  if (const Json* gj = root.child("graph")) {
    Section s(*gj, "graph");
    GraphOptions& g = c.graph;
    std::string variant = knn_variant_name(g.variant);
    std::string sampson = sampson_name(g.e0.denominator);
    s.get("k", g.k);
    s.get("tau", g.tau);
    s.get("variant", variant);
    s.get("symmetrize", g.symmetrize);
    s.get("second_image", g.second_image);
    s.get("radius", g.radius);
    s.get("e0_seed_size", g.e0.seed_size);
    s.get("e0_iterations", g.e0.iterations);
    s.get_u64("e0_seed", g.e0.seed);
    s.get("sampson", sampson);
    s.done();
    g.variant = config_call([&] { return parse_knn_variant(variant); });
    g.e0.denominator = parse_sampson(sampson);
    if (g.k < 1) config_error("graph.k must be >= 1");
    if (!(g.tau > 0.0)) config_error("graph.tau must be > 0");
    if (!(g.radius >= 0.0)) config_error("graph.radius must be >= 0");
    if (g.e0.iterations < 0) config_error("graph.e0_iterations must be >= 0");
  }
  c.graph.e0.tau = c.graph.tau;

  if (const Json* mj = root.child("model")) c.model = read_model(*mj);

  if (const Json* tj = root.child("train")) {
    Section s(*tj, "train");
    s.get("batch_size", c.train.batch_size);
    s.get("lr", c.train.lr);
    s.get("epochs", c.train.epochs);
    s.get("split", c.train.split);
    s.get("prebuild_workers", c.train.prebuild_workers);
    s.get("output_dir", c.train.output_dir);
    s.done();
  }

  if (const Json* lj = root.child("loss")) {
    Section s(*lj, "loss");
    std::string qn = c.loss.quat_norm == QuatNorm::kL1 ? "l1" : "l2";
    s.get("pose", c.weights.pose);
    s.get("frob", c.weights.frob);
    s.get("svd", c.weights.svd);
    s.get("yaw", c.weights.yaw);
    s.get("quat_norm", qn);
    s.get("unit_essential", c.loss.unit_essential);
    s.done();
    if (qn == "l1") {
      c.loss.quat_norm = QuatNorm::kL1;
    } else if (qn == "l2") {
      c.loss.quat_norm = QuatNorm::kL2;
    } else {
      config_error("loss.quat_norm must be 'l1' or 'l2'");
    }
    c.weights.validate();
  }

  if (const Json* ej = root.child("eval")) {
    Section s(*ej, "eval");
    s.get("spacings", c.eval.spacings);
    s.get("output_dir", c.eval.output_dir);
    s.get("checkpoint", c.eval.checkpoint);
    s.get("baseline", c.eval.baseline);
    s.get("align", c.eval.align);
    s.get("gt_scale", c.eval.gt_scale);
    s.done();
    for (double sp : c.eval.spacings) {
      if (!(sp > 0.0)) config_error("eval.spacings must be positive");
    }
    if (c.eval.baseline != "none" && c.eval.baseline != "eightpoint") {
      config_error("eval.baseline must be 'none' or 'eightpoint'");
    }
    if (c.eval.align != "none" && c.eval.align != "se3" && c.eval.align != "sim3") {
      config_error("eval.align must be 'none', 'se3' or 'sim3'");
    }
  }

  if (const Json* gj = root.child("gradcheck")) {
    Section s(*gj, "gradcheck");
    s.get("presets", c.gradcheck.presets);
    s.get("nodes", c.gradcheck.nodes);
    s.get("hidden", c.gradcheck.hidden);
    s.get("tolerance", c.gradcheck.tolerance);
    s.get("h", c.gradcheck.h);
    s.get("corrupt", c.gradcheck.corrupt);
    s.done();
    if (c.gradcheck.presets.empty()) config_error("gradcheck.presets must not be empty");
    for (const auto& p : c.gradcheck.presets) config_call([&] { return nn::make_preset(p, 4); });
    if (c.gradcheck.nodes < 8) config_error("gradcheck.nodes must be >= 8");
    if (c.gradcheck.hidden < 4 || c.gradcheck.hidden % 4 != 0) {
      config_error("gradcheck.hidden must be a positive multiple of 4");
    }
  }

  if (const Json* bj = root.child("bench")) {
    Section s(*bj, "bench");
    s.get("presets", c.bench.presets);
    s.get("variants", c.bench.variants);
    s.get("epochs", c.bench.epochs);
    s.get("output_dir", c.bench.output_dir);
    s.done();
    if (c.bench.presets.empty() || c.bench.variants.empty()) {
      config_error("bench.presets and bench.variants must not be empty");
    }
    for (const auto& p : c.bench.presets) config_call([&] { return nn::make_preset(p, 4); });
    for (const auto& v : c.bench.variants) config_call([&] { return parse_knn_variant(v); });
    if (c.bench.epochs < 1) config_error("bench.epochs must be >= 1");
  }

  root.child("bench");
  root.done();

  config_call([&] {
    make_train_config(c).validate();
    return 0;
  });
  return c;
}

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

bool DatasetConfig::operator==(const DatasetConfig& o) const {
  return source == o.source && root == o.root && sequence == o.sequence && motion == o.motion &&
         frames == o.frames && trajectory.step == o.trajectory.step &&
         trajectory.yaw_rate == o.trajectory.yaw_rate &&
         trajectory.jitter_rot == o.trajectory.jitter_rot &&
         trajectory.jitter_trans == o.trajectory.jitter_trans && trajectory.fps == o.trajectory.fps &&
         n_points == o.n_points && depth_min == o.depth_min && depth_max == o.depth_max &&
         noise_px == o.noise_px && outlier_fraction == o.outlier_fraction &&
         intrinsics == o.intrinsics && image == o.image && spacing == o.spacing;
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return seed == o.seed && dataset == o.dataset && graph == o.graph &&
         graph.e0.seed_size == o.graph.e0.seed_size && graph.e0.iterations == o.graph.e0.iterations &&
         graph.e0.seed == o.graph.e0.seed && graph.e0.denominator == o.graph.e0.denominator &&
         model == o.model && train == o.train && weights == o.weights && loss == o.loss &&
         eval == o.eval && gradcheck == o.gradcheck && bench == o.bench;
}

std::string format_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

ExperimentConfig parse_config(const std::string& json_text) { return parse_config(json_text, {}); }

ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  Json doc = json_text.find_first_not_of(" \t\r\n") == std::string::npos ? Json::object()
                                                                          : parse_json(json_text);
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) config_error("override '" + ov + "' is not key=value");
    const std::string path = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    Json value;
    try {
      value = Json::parse(text);
    } catch (const nlohmann::json::exception&) {
      value = text;
    }
    Json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (key.empty()) config_error("override '" + ov + "' has an empty path component");
      if (!node->is_object()) config_error("override '" + ov + "' descends into a non-object");
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      node = &(*node)[key];
      if (node->is_null()) *node = Json::object();
      start = dot + 1;
    }
  }
  return from_json(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  return parse_config(read_text_file(path), overrides);
}

TrainConfig make_train_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.batch_size = c.train.batch_size;
  t.lr = c.train.lr;
  t.epochs = c.train.epochs;
  t.split = c.train.split;
  t.seed = c.seed;
  t.weights = c.weights;
  t.loss = c.loss;
  t.model = c.model;
  t.graph = c.graph;
  t.graph.e0.tau = c.graph.tau;
  t.prebuild_workers = c.train.prebuild_workers;
  return t;
}

SceneSpec make_scene_template(const ExperimentConfig& c) {
  SceneSpec s;
  s.seed = substream_seed(c.seed, "dataset");
  s.n_points = c.dataset.n_points;
  s.depth_min = c.dataset.depth_min;
  s.depth_max = c.dataset.depth_max;
  s.intrinsics = c.dataset.intrinsics;
  s.image = c.dataset.image;
  s.noise_px = c.dataset.noise_px;
  s.outlier_fraction = c.dataset.outlier_fraction;
  return s;
}

std::filesystem::path resolve_output(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("EPIGRAPH_OUTPUT_ROOT"); root && *root) {
    return std::filesystem::path(root) / p;
  }
  return p;
}

}  // namespace epigraph
