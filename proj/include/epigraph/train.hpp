#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "epigraph/graph.hpp"
#include "epigraph/loss.hpp"
#include "epigraph/nn.hpp"
#include "epigraph/synth.hpp"

namespace epigraph {

struct TrainConfig {
  int batch_size = 4;
  double lr = 1e-4;
  int epochs = 12;
  double split = 0.8;  // training fraction
  std::uint64_t seed = 0;
  LossWeights weights;
  LossOptions loss;
  nn::ModelConfig model = nn::make_preset("GAT+2GCN");
  GraphOptions graph;
  int prebuild_workers = 0;  // > 0 builds all graphs up front on a thread pool
  std::filesystem::path checkpoint_path;  // empty: keep the best model in memory only

  /// Throws Error(kConfig).
  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  LossBreakdown train;
  LossBreakdown val;
  std::size_t processed = 0;
  std::size_t skipped = 0;
  std::size_t val_processed = 0;
  std::size_t val_skipped = 0;
  bool checkpointed = false;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::filesystem::path checkpoint_path;
  std::vector<std::string> train_pairs;
  std::vector<std::string> val_pairs;
};

std::string format_train_report(const TrainReport& report);

/// Seeded shuffle, then round(fraction * n) items (clamped to [1, n - 1]) go
/// to training. Throws Error(kDataset) for fewer than 2 items and
/// Error(kConfig) unless 0 < fraction < 1.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, std::uint64_t seed);

template <class T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(const std::vector<T>& items,
                                                        double fraction, std::uint64_t seed) {
  const auto [tr, va] = split_indices(items.size(), fraction, seed);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i : tr) out.first.push_back(items[i]);
  for (std::size_t i : va) out.second.push_back(items[i]);
  return out;
}

/// Graph build cache keyed by pair id and the graph options that shape the
/// result. Failed builds are cached as failures.
class GraphCache {
 public:
  explicit GraphCache(GraphOptions options) : options_(std::move(options)) {}

  const EpipolarGraph* get(const CorrespondenceSet& corr);
  void prebuild(const std::vector<CorrespondenceSet>& samples, int workers);
  std::string key(const CorrespondenceSet& corr) const;
  std::size_t size() const { return entries_.size(); }
  const GraphOptions& options() const { return options_; }
  /// Replaces the options and drops every entry built under different ones.
  void set_options(const GraphOptions& options);

 private:
  struct Entry {
    std::optional<EpipolarGraph> graph;
    std::string error;
  };
  GraphOptions options_;
  std::map<std::string, Entry> entries_;
};

struct TrainResult {
  TrainReport report;
  nn::Model best;
  nn::Model final_model;
};

/// Every sample must carry gt_relative. Throws Error(kDataset) when an
/// epoch cannot build a single training graph.
TrainResult train(const TrainConfig& config, const std::vector<CorrespondenceSet>& dataset);

/// Metadata written alongside the model in training checkpoints.
std::map<std::string, std::string> checkpoint_meta(const TrainConfig& config, int epoch,
                                                   double val_total);

struct EvalItem {
  std::string pair_id;
  bool ok = false;
  std::string error;  // build failure message when !ok
  PosePrediction prediction;
  Pose pred;
  std::optional<Pose> gt;
  LossBreakdown loss;  // zero unless gt is present
};

/// Forward-only pass. Throws Error(kSchema) when `expected` differs from the
/// checkpoint's model config.
std::vector<EvalItem> evaluate(const nn::Model& model, const std::vector<CorrespondenceSet>& pairs,
                               const GraphOptions& graph, const LossWeights& weights = {},
                               const LossOptions& loss = {},
                               const std::optional<nn::ModelConfig>& expected = std::nullopt);

}  // namespace epigraph
