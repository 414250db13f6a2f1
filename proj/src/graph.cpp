#include "epigraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include "epigraph/error.hpp"
#include "epigraph/text_io.hpp"

namespace epigraph {

const char* knn_variant_name(KnnVariant v) {
  switch (v) {
    case KnnVariant::kHard: return "hard";
    case KnnVariant::kSoft: return "soft";
    case KnnVariant::kRadius: return "radius";
    case KnnVariant::kMutual: return "mutual";
  }
  return "hard";
}

KnnVariant parse_knn_variant(const std::string& name) {
  if (name == "hard" || name == "knn") return KnnVariant::kHard;
  if (name == "soft") return KnnVariant::kSoft;
  if (name == "radius") return KnnVariant::kRadius;
  if (name == "mutual") return KnnVariant::kMutual;
  throw Error(ErrorCode::kConfig, "unknown k-NN variant '" + name + "'");
}

namespace {

// Neighbors of i sorted by (distance, index), excluding i.
std::vector<std::pair<double, int>> ranked_neighbors(const PointCloud& coords, int i) {
  const int n = static_cast<int>(coords.rows());
  std::vector<std::pair<double, int>> out;
  out.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    out.emplace_back((coords.row(i) - coords.row(j)).norm(), j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double median_kth_neighbor_distance(const PointCloud& coords, int k) {
  const int n = static_cast<int>(coords.rows());
  if (n < 2) return 0.0;
  const int kk = std::clamp(k, 1, n - 1);
  std::vector<double> kth;
  kth.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) kth.push_back(ranked_neighbors(coords, i)[static_cast<std::size_t>(kk - 1)].first);
  std::sort(kth.begin(), kth.end());
  const std::size_t m = kth.size() / 2;
  return kth.size() % 2 == 1 ? kth[m] : 0.5 * (kth[m - 1] + kth[m]);
}

EdgeSet build_edges(const PointCloud& coords, KnnVariant variant, int k, double radius) {
  EdgeSet out;
  const int n = static_cast<int>(coords.rows());
  if (n < 2) return out;

  if (variant == KnnVariant::kRadius) {
    if (!(radius > 0.0)) throw Error(ErrorCode::kInvalidInput, "radius variant needs radius > 0");
    for (int i = 0; i < n; ++i) {
      for (const auto& [d, j] : ranked_neighbors(coords, i)) {
        if (!(d < radius)) break;
        out.edges.push_back({i, j, 1.0});
      }
    }
    return out;
  }

  if (k < 1) throw Error(ErrorCode::kInvalidInput, "k must be >= 1");
  int kk = k;
  if (kk >= n) {
    kk = n - 1;
    out.k_clamped = true;
  }
  std::vector<std::vector<std::pair<double, int>>> knn(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto ranked = ranked_neighbors(coords, i);
    ranked.resize(static_cast<std::size_t>(kk));
    knn[static_cast<std::size_t>(i)] = std::move(ranked);
  }

  if (variant == KnnVariant::kMutual) {
    std::set<std::pair<int, int>> hard;
    for (int i = 0; i < n; ++i)
      for (const auto& nb : knn[static_cast<std::size_t>(i)]) hard.emplace(i, nb.second);
    for (int i = 0; i < n; ++i)
      for (const auto& nb : knn[static_cast<std::size_t>(i)])
        if (hard.count({nb.second, i}) != 0) out.edges.push_back({i, nb.second, 1.0});
    return out;
  }

  double sigma = 0.0;
  if (variant == KnnVariant::kSoft) {
    for (const auto& row : knn) sigma += row.back().first;
    sigma /= n;
    out.bandwidth = sigma;
  }
  for (int i = 0; i < n; ++i) {
    for (const auto& [d, j] : knn[static_cast<std::size_t>(i)]) {
      double w = 1.0;
      if (variant == KnnVariant::kSoft && sigma > 0.0) {
        w = std::max(std::exp(-d * d / (2.0 * sigma * sigma)),
                     std::numeric_limits<double>::min());
      }
      out.edges.push_back({i, j, w});
    }
  }
  return out;
}

std::vector<std::size_t> sampson_filter(const CorrespondenceSet& corr, const EssentialMatrix& E0,
                                        double tau, SampsonDenominator mode) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidInput, "Sampson threshold must be > 0");
  std::vector<std::size_t> kept;
  if (std::isinf(tau)) {
    kept.resize(corr.pairs.size());
    std::iota(kept.begin(), kept.end(), 0);
  } else {
    for (std::size_t i = 0; i < corr.pairs.size(); ++i) {
      const auto& c = corr.pairs[i];
      double d = std::numeric_limits<double>::infinity();
      try {
        d = sampson_distance(normalize_pixel(c.p1, corr.intrinsics),
                             normalize_pixel(c.p2, corr.intrinsics), E0, mode);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDegenerateGeometry) throw;
      }
      if (d < tau) kept.push_back(i);
    }
  }
  if (kept.empty()) {
    throw Error(ErrorCode::kEmptyGraph, "Sampson filter removed every correspondence");
  }
  return kept;
}

void EpipolarGraph::validate() const {
  const int n = num_nodes();
  if (kept_indices.size() != static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::kValidation, "kept_indices size differs from node count");
  }
  for (const auto& e : edges) {
    if (e.src < 0 || e.dst < 0 || e.src >= n || e.dst >= n) {
      throw Error(ErrorCode::kValidation, "edge (" + std::to_string(e.src) + ", " +
                                              std::to_string(e.dst) + ") out of range for " +
                                              std::to_string(n) + " nodes");
    }
    if (e.src == e.dst) throw Error(ErrorCode::kValidation, "self-loop in edge list");
    if (!(e.weight > 0.0)) throw Error(ErrorCode::kValidation, "edge weight must be > 0");
  }
}

namespace {

PointCloud neighborhood_coords(const NodeFeatures& features, bool second_image) {
  return features.middleCols<3>(second_image ? 3 : 0);
}

void attach_edges(EpipolarGraph& g, const GraphOptions& options) {
  const PointCloud coords = neighborhood_coords(g.node_features, options.second_image);
  double radius = options.radius;
  if (options.variant == KnnVariant::kRadius && !(radius > 0.0)) {
    radius = median_kth_neighbor_distance(coords, options.k);
    // Strict inequality would drop every edge if the median is zero.
    if (!(radius > 0.0)) radius = std::numeric_limits<double>::min();
  }
  EdgeSet es = build_edges(coords, options.variant, options.k, radius);
  g.edges = std::move(es.edges);
  g.meta.k = options.k;
  g.meta.tau = options.tau;
  g.meta.variant = options.variant;
  g.meta.symmetrize = options.symmetrize;
  g.meta.second_image = options.second_image;
  g.meta.radius = options.variant == KnnVariant::kRadius ? radius : 0.0;
  g.meta.bandwidth = es.bandwidth;
  g.meta.k_clamped = es.k_clamped;
}

}  // namespace

EpipolarGraph graph_from_pairs(std::span<const PointPair> pairs, const GraphOptions& options) {
  EpipolarGraph g;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  g.node_features.resize(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    g.node_features.row(i).head<3>() = pairs[static_cast<std::size_t>(i)].first.transpose();
    g.node_features.row(i).tail<3>() = pairs[static_cast<std::size_t>(i)].second.transpose();
  }
  g.kept_indices.resize(pairs.size());
  std::iota(g.kept_indices.begin(), g.kept_indices.end(), 0);
  g.meta.source_count = pairs.size();
  attach_edges(g, options);
  return g;
}

EpipolarGraph build_graph(const CorrespondenceSet& corr, const GraphOptions& options) {
  const std::vector<PointPair> all = normalized_pairs(corr);

  // G1 over every correspondence; only its size is kept.
  PointCloud coords(static_cast<Eigen::Index>(all.size()), 3);
  for (std::size_t i = 0; i < all.size(); ++i) {
    coords.row(static_cast<Eigen::Index>(i)) =
        (options.second_image ? all[i].second : all[i].first).transpose();
  }
  const std::size_t g1_edges = build_edges(coords, KnnVariant::kHard, options.k).edges.size();

  E0Options e0 = options.e0;
  e0.tau = std::isinf(options.tau) ? e0.tau : options.tau;
  const EssentialMatrix E0 = estimate_E0(corr, e0);
  const std::vector<std::size_t> kept = sampson_filter(corr, E0, options.tau, e0.denominator);

  std::vector<PointPair> survivors;
  survivors.reserve(kept.size());
  for (std::size_t i : kept) survivors.push_back(all[i]);
  EpipolarGraph g = graph_from_pairs(survivors, options);
  g.kept_indices = kept;
  g.meta.source_count = corr.pairs.size();
  g.meta.g1_edge_count = g1_edges;
  g.meta.e0 = E0;
  g.pair_id = corr.pair_id;
  return g;
}

std::string format_graph(const EpipolarGraph& g) {
  g.validate();
  std::ostringstream os;
  os << "# epigraph-graph v1\n";
  os << "nodes " << g.num_nodes() << '\n';
  for (int i = 0; i < g.num_nodes(); ++i) {
    os << g.kept_indices[static_cast<std::size_t>(i)];
    for (int c = 0; c < 6; ++c) os << ' ' << format_double(g.node_features(i, c));
    os << '\n';
  }
  os << "edges " << g.edges.size() << '\n';
  for (const auto& e : g.edges) os << e.src << ' ' << e.dst << ' ' << format_double(e.weight) << '\n';
  const auto& m = g.meta;
  os << "meta\n";
  os << "pair_id " << g.pair_id.sequence << ' ' << g.pair_id.frame_i << ' ' << g.pair_id.frame_j << '\n';
  os << "k " << m.k << '\n';
  os << "tau " << format_double(m.tau) << '\n';
  os << "variant " << knn_variant_name(m.variant) << '\n';
  os << "symmetrize " << (m.symmetrize ? 1 : 0) << '\n';
  os << "second_image " << (m.second_image ? 1 : 0) << '\n';
  os << "radius " << format_double(m.radius) << '\n';
  os << "bandwidth " << format_double(m.bandwidth) << '\n';
  os << "k_clamped " << (m.k_clamped ? 1 : 0) << '\n';
  os << "source_count " << m.source_count << '\n';
  os << "g1_edges " << m.g1_edge_count << '\n';
  os << "e0";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) os << ' ' << format_double(m.e0(r, c));
  os << "\nend\n";
  return os.str();
}

EpipolarGraph parse_graph(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next = [&]() -> std::vector<std::string> {
    while (std::getline(in, line)) {
      ++line_no;
      auto tok = split_ws(line);
      if (!tok.empty()) return tok;
    }
    throw Error(ErrorCode::kParse, "graph file ends early after line " + std::to_string(line_no));
  };
  auto where = [&]() { return "line " + std::to_string(line_no); };

  auto tok = next();
  if (tok.size() != 3 || tok[0] != "#" || tok[1] != "epigraph-graph") {
    throw Error(ErrorCode::kParse, "missing '# epigraph-graph' header");
  }
  if (tok[2] != "v1") throw Error(ErrorCode::kSchema, "unsupported graph format " + tok[2]);

  EpipolarGraph g;
  tok = next();
  if (tok.size() != 2 || tok[0] != "nodes") throw Error(ErrorCode::kParse, where() + ": expected 'nodes <N>'");
  const auto n = parse_int(tok[1], where());
  if (n < 0) throw Error(ErrorCode::kValidation, where() + ": negative node count");
  g.node_features.resize(n, 6);
  g.kept_indices.resize(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    tok = next();
    if (tok.size() != 7) throw Error(ErrorCode::kParse, where() + ": node line needs 7 fields");
    const auto idx = parse_int(tok[0], where());
    if (idx < 0) throw Error(ErrorCode::kValidation, where() + ": negative source index");
    g.kept_indices[static_cast<std::size_t>(i)] = static_cast<std::size_t>(idx);
    for (int c = 0; c < 6; ++c) g.node_features(i, c) = parse_double(tok[static_cast<std::size_t>(c + 1)], where());
  }
  tok = next();
  if (tok.size() != 2 || tok[0] != "edges") throw Error(ErrorCode::kParse, where() + ": expected 'edges <M>'");
  const auto m = parse_int(tok[1], where());
  if (m < 0) throw Error(ErrorCode::kValidation, where() + ": negative edge count");
  for (long long e = 0; e < m; ++e) {
    tok = next();
    if (tok.size() != 3) throw Error(ErrorCode::kParse, where() + ": edge line needs 'src dst weight'");
    g.edges.push_back({static_cast<int>(parse_int(tok[0], where())),
                       static_cast<int>(parse_int(tok[1], where())), parse_double(tok[2], where())});
  }
  tok = next();
  if (tok.size() != 1 || tok[0] != "meta") throw Error(ErrorCode::kParse, where() + ": expected 'meta'");
  auto& meta = g.meta;
  for (;;) {
    tok = next();
    const std::string& key = tok[0];
    if (key == "end") break;
    if (tok.size() < 2) throw Error(ErrorCode::kParse, where() + ": metadata '" + key + "' has no value");
    if (key == "pair_id" && tok.size() == 4) {
      g.pair_id = PairId{tok[1], static_cast<int>(parse_int(tok[2], where())),
                         static_cast<int>(parse_int(tok[3], where()))};
    } else if (key == "k") {
      meta.k = static_cast<int>(parse_int(tok[1], where()));
    } else if (key == "tau") {
      meta.tau = parse_double(tok[1], where());
    } else if (key == "variant") {
      meta.variant = parse_knn_variant(tok[1]);
    } else if (key == "symmetrize") {
      meta.symmetrize = parse_int(tok[1], where()) != 0;
    } else if (key == "second_image") {
      meta.second_image = parse_int(tok[1], where()) != 0;
    } else if (key == "radius") {
      meta.radius = parse_double(tok[1], where());
    } else if (key == "bandwidth") {
      meta.bandwidth = parse_double(tok[1], where());
    } else if (key == "k_clamped") {
      meta.k_clamped = parse_int(tok[1], where()) != 0;
    } else if (key == "source_count") {
      meta.source_count = static_cast<std::size_t>(parse_int(tok[1], where()));
    } else if (key == "g1_edges") {
      meta.g1_edge_count = static_cast<std::size_t>(parse_int(tok[1], where()));
    } else if (key == "e0") {
      if (tok.size() != 10) throw Error(ErrorCode::kParse, where() + ": e0 needs 9 values");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          meta.e0(r, c) = parse_double(tok[static_cast<std::size_t>(1 + 3 * r + c)], where());
    } else {
      throw Error(ErrorCode::kParse, where() + ": unknown metadata key '" + key + "'");
    }
  }
  g.validate();
  return g;
}

void export_graph(const EpipolarGraph& g, const std::filesystem::path& path) {
  write_text_file(path, format_graph(g));
}

EpipolarGraph import_graph(const std::filesystem::path& path) {
  return parse_graph(read_text_file(path));
}

}  // namespace epigraph
