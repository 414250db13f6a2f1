#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epigraph/epipolar.hpp"
#include "epigraph/geom.hpp"
#include "epigraph/synth.hpp"

namespace epigraph {

enum class KnnVariant { kHard, kSoft, kRadius, kMutual };

const char* knn_variant_name(KnnVariant v);
KnnVariant parse_knn_variant(const std::string& name);

struct Edge {
  int src = 0;
  int dst = 0;
  double weight = 1.0;
  bool operator==(const Edge&) const = default;
};

using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using NodeFeatures = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;

struct EdgeSet {
  std::vector<Edge> edges;  // directed, src-major then neighbor rank
  bool k_clamped = false;
  double bandwidth = 0.0;   // soft variant sigma_w
};

/// Directed neighborhood edges: edge i->j means j is a neighbor of i.
/// hard: j in the k nearest of i (ties by smaller index), weight 1.
/// soft: hard support, weight exp(-d^2 / (2 sigma_w^2)), sigma_w the mean
///       k-th neighbor distance. radius: d < radius, weight 1.
/// mutual: hard edges whose reverse is also a hard edge.
/// k >= N is clamped to N - 1 and flagged.
EdgeSet build_edges(const PointCloud& coords, KnnVariant variant, int k, double radius = 0.0);

/// Median over points of the distance to the k-th nearest neighbor.
double median_kth_neighbor_distance(const PointCloud& coords, int k);

/// Indices with sampson_distance(x1_i, x2_i, E0) < tau, in input order.
/// Throws Error(kEmptyGraph) when nothing survives.
std::vector<std::size_t> sampson_filter(
    const CorrespondenceSet& corr, const EssentialMatrix& E0, double tau,
    SampsonDenominator mode = SampsonDenominator::kTwoComponent);

inline constexpr double kFilterDisabled = std::numeric_limits<double>::infinity();

struct GraphOptions {
  int k = 6;
  double tau = 1e-4;
  KnnVariant variant = KnnVariant::kHard;
  bool symmetrize = true;    // add reverse edges when propagating
  bool second_image = false; // build neighborhoods on x2 instead of x1
  double radius = 0.0;       // 0: median k-th neighbor distance of the survivors
  E0Options e0;

  bool operator==(const GraphOptions& o) const {
    return k == o.k && tau == o.tau && variant == o.variant && symmetrize == o.symmetrize &&
           second_image == o.second_image && radius == o.radius;
  }
};

struct GraphMetadata {
  int k = 6;
  double tau = 1e-4;
  KnnVariant variant = KnnVariant::kHard;
  bool symmetrize = true;
  bool second_image = false;
  double radius = 0.0;
  double bandwidth = 0.0;
  bool k_clamped = false;
  std::size_t source_count = 0;  // correspondences before filtering
  std::size_t g1_edge_count = 0; // edges of the unfiltered graph
  EssentialMatrix e0 = Mat3::Zero();

  bool operator==(const GraphMetadata&) const = default;
};

struct EpipolarGraph {
  NodeFeatures node_features;  // [x1^T, x2^T] per node
  std::vector<Edge> edges;
  std::vector<std::size_t> kept_indices;  // node -> source correspondence
  GraphMetadata meta;
  PairId pair_id;

  int num_nodes() const { return static_cast<int>(node_features.rows()); }
  /// Index ranges, no self-loops, positive weights; throws Error(kValidation).
  void validate() const;
  bool operator==(const EpipolarGraph&) const = default;
};

/// normalize -> k-NN graph G1 -> E0 -> Sampson filter -> edges rebuilt on
/// the survivors. Duplicate correspondences stay distinct nodes.
EpipolarGraph build_graph(const CorrespondenceSet& corr, const GraphOptions& options = {});

/// Graph over already-selected normalized pairs (no E0, no filtering).
EpipolarGraph graph_from_pairs(std::span<const PointPair> pairs, const GraphOptions& options);

std::string format_graph(const EpipolarGraph& g);
EpipolarGraph parse_graph(const std::string& text);
void export_graph(const EpipolarGraph& g, const std::filesystem::path& path);
EpipolarGraph import_graph(const std::filesystem::path& path);

}  // namespace epigraph
