#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "epigraph/graph.hpp"
#include "epigraph/loss.hpp"
#include "epigraph/nn.hpp"
#include "epigraph/synth.hpp"
#include "epigraph/train.hpp"

namespace epigraph {

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" or "files"
  std::string root = "data";         // generate output, "files" input
  std::string sequence = "seq";
  MotionModel motion = MotionModel::kArc;
  int frames = 60;
  TrajectoryOptions trajectory;
  int n_points = 100;
  double depth_min = 4.0;
  double depth_max = 20.0;
  double noise_px = 0.0;
  double outlier_fraction = 0.0;
  Intrinsics intrinsics;
  ImageSize image;
  double spacing = 0.1;  // spacing used for training

  bool operator==(const DatasetConfig& o) const;
};

struct TrainSection {
  int batch_size = 4;
  double lr = 1e-4;
  int epochs = 12;
  double split = 0.8;
  int prebuild_workers = 0;
  std::string output_dir = "train";

  bool operator==(const TrainSection&) const = default;
};

struct EvalConfig {
  std::vector<double> spacings = {0.1, 0.5, 1.0};
  std::string output_dir = "eval";
  std::string checkpoint;  // empty: <train.output_dir>/best.ckpt
  std::string baseline = "eightpoint";  // "none" or "eightpoint"
  std::string align = "none";           // "none", "se3" or "sim3"
  bool gt_scale = false;                // rescale unit baseline translations by |t_gt|

  bool operator==(const EvalConfig&) const = default;
};

struct GradcheckConfig {
  std::vector<std::string> presets = {"GAT+2GCN", "3GCN+GAT", "GIN_SumPool"};
  int nodes = 12;
  int hidden = 64;
  double tolerance = 1e-5;
  double h = 1e-6;
  bool corrupt = false;

  bool operator==(const GradcheckConfig&) const = default;
};

struct BenchConfig {
  std::vector<std::string> presets = {"GAT+2GCN", "3GCN+GAT", "GIN_SumPool"};
  std::vector<std::string> variants = {"hard", "soft", "mutual", "radius"};
  int epochs = 12;
  std::string output_dir = "bench";

  bool operator==(const BenchConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  GraphOptions graph;
  nn::ModelConfig model = nn::make_preset("GAT+2GCN");
  TrainSection train;
  LossWeights weights;
  LossOptions loss;
  EvalConfig eval;
  GradcheckConfig gradcheck;
  BenchConfig bench;

  bool operator==(const ExperimentConfig& o) const;
};

/// Full serialization with every default spelled out.
std::string format_config(const ExperimentConfig& c);
/// Strict: unknown keys, wrong types and invalid values raise Error(kConfig).
ExperimentConfig parse_config(const std::string& json_text);
/// Applies dotted "section.key=value" overrides (values parsed as JSON when
/// possible, else as strings) on top of the JSON text, then parses.
ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides);
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

TrainConfig make_train_config(const ExperimentConfig& c);
SceneSpec make_scene_template(const ExperimentConfig& c);

/// Relative paths are placed under $EPIGRAPH_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::string& path);

}  // namespace epigraph
