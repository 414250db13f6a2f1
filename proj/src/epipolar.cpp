#include "epigraph/epipolar.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "epigraph/error.hpp"
#include "epigraph/synth.hpp"
#include "epigraph/text_io.hpp"

namespace epigraph {

namespace {

// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
Mat3 hartley_transform(std::span<const PointPair> pairs, bool second) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pairs) c += (second ? p.second : p.first).head<2>();
  c /= static_cast<double>(pairs.size());
  double mean_dist = 0.0;
  for (const auto& p : pairs) mean_dist += ((second ? p.second : p.first).head<2>() - c).norm();
  mean_dist /= static_cast<double>(pairs.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 T;
  T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return T;
}

}  // namespace

Eigen::Matrix<double, 9, 1> vec_row_major(const Mat3& M) {
  Eigen::Matrix<double, 9, 1> v;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[3 * r + c] = M(r, c);
  return v;
}

ConstraintMatrix build_constraint_matrix(std::span<const PointPair> pairs) {
  if (pairs.size() < 8) {
    throw Error(ErrorCode::kInsufficientCorrespondences,
                "constraint matrix needs at least 8 correspondences, got " +
                    std::to_string(pairs.size()));
  }
  ConstraintMatrix A(static_cast<Eigen::Index>(pairs.size()), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Vec3& x1 = pairs[i].first;
    const Vec3& x2 = pairs[i].second;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) A(static_cast<Eigen::Index>(i), 3 * a + b) = x2[a] * x1[b];
  }
  return A;
}

EssentialMatrix canonicalize_essential(const EssentialMatrix& E) {
  const double n = E.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::kInvalidInput, "cannot canonicalize a zero matrix");
  EssentialMatrix out = E / n;
  Eigen::Index r = 0, c = 0;
  out.cwiseAbs().maxCoeff(&r, &c);
  if (out(r, c) < 0.0) out = -out;
  return out;
}

EssentialMatrix project_to_essential(const Mat3& M) {
  if (!(M.norm() > 0.0)) throw Error(ErrorCode::kInvalidInput, "cannot project a zero matrix");
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  const double m = 0.5 * (s[0] + s[1]);
  return svd.matrixU() * Vec3(m, m, 0.0).asDiagonal() * svd.matrixV().transpose();
}

EssentialMatrix solve_eight_point(std::span<const PointPair> pairs) {
  if (pairs.size() < 8) {
    throw Error(ErrorCode::kInsufficientCorrespondences,
                "eight-point needs at least 8 correspondences, got " + std::to_string(pairs.size()));
  }
  const Mat3 T1 = hartley_transform(pairs, false);
  const Mat3 T2 = hartley_transform(pairs, true);
  std::vector<PointPair> conditioned;
  conditioned.reserve(pairs.size());
  for (const auto& p : pairs) conditioned.emplace_back(T1 * p.first, T2 * p.second);
  const ConstraintMatrix A = build_constraint_matrix(conditioned);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() < 8 || !(sv[7] > 1e-10 * sv[0])) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "constraint matrix has rank < 8; essential matrix is not determined");
  }
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Mat3 En;
  En << e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8];
  const Mat3 E = T2.transpose() * En * T1;
  return canonicalize_essential(project_to_essential(E));
}

DecompositionCandidates decompose_essential(const EssentialMatrix& E) {
  const double n = E.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::kInvalidEssential, "zero matrix is not essential");
  Eigen::JacobiSVD<Mat3> svd(E / n, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (s[2] > 1e-6 * s[0] || (s[0] - s[1]) > 1e-6 * s[0]) {
    throw Error(ErrorCode::kInvalidEssential,
                "matrix lacks the (s, s, 0) essential spectrum");
  }
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  if (U.determinant() < 0.0) U = -U;
  if (V.determinant() < 0.0) V = -V;
  Mat3 W;
  W << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 R1 = U * W * V.transpose();
  const Mat3 R2 = U * W.transpose() * V.transpose();
  const Vec3 t = U.col(2).normalized();
  return {PoseCandidate{R1, t}, PoseCandidate{R1, -t}, PoseCandidate{R2, t},
          PoseCandidate{R2, -t}};
}

Vec3 triangulate_dlt(const NormalizedPoint& x1, const NormalizedPoint& x2, const Mat3& R,
                     const Vec3& t) {
  Eigen::Matrix<double, 3, 4> P1 = Eigen::Matrix<double, 3, 4>::Zero();
  P1.leftCols<3>() = Mat3::Identity();
  Eigen::Matrix<double, 3, 4> P2;
  P2.leftCols<3>() = R;
  P2.col(3) = t;
  Eigen::Matrix4d A;
  A.row(0) = x1.x() * P1.row(2) - P1.row(0);
  A.row(1) = x1.y() * P1.row(2) - P1.row(1);
  A.row(2) = x2.x() * P2.row(2) - P2.row(0);
  A.row(3) = x2.y() * P2.row(2) - P2.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  const Eigen::Vector4d X = svd.matrixV().col(3);
  return X.head<3>() / X[3];
}

CheiralityResult cheirality_select(const DecompositionCandidates& candidates,
                                   std::span<const PointPair> pairs) {
  if (pairs.empty()) {
    throw Error(ErrorCode::kInsufficientCorrespondences, "cheirality needs a correspondence");
  }
  CheiralityResult result;
  for (int c = 0; c < 4; ++c) {
    const auto& cand = candidates[static_cast<std::size_t>(c)];
    int count = 0;
    for (const auto& p : pairs) {
      const Vec3 X = triangulate_dlt(p.first, p.second, cand.rotation, cand.translation);
      const Vec3 X2 = cand.rotation * X + cand.translation;
      if (X.z() > 0.0 && X2.z() > 0.0) ++count;
    }
    result.positive_counts[static_cast<std::size_t>(c)] = count;
  }
  const int best = *std::max_element(result.positive_counts.begin(), result.positive_counts.end());
  std::vector<int> tied;
  for (int c = 0; c < 4; ++c)
    if (result.positive_counts[static_cast<std::size_t>(c)] == best) tied.push_back(c);
  if (tied.size() > 1) throw AmbiguousCheiralityError(tied, best);
  result.index = tied.front();
  const auto& chosen = candidates[static_cast<std::size_t>(result.index)];
  result.pose = Pose::from_rt(chosen.rotation, chosen.translation);
  return result;
}

std::vector<PointPair> normalized_pairs(const CorrespondenceSet& corr) {
  std::vector<PointPair> out;
  out.reserve(corr.pairs.size());
  for (const auto& c : corr.pairs) {
    out.emplace_back(normalize_pixel(c.p1, corr.intrinsics), normalize_pixel(c.p2, corr.intrinsics));
  }
  return out;
}

Pose classical_relative_pose(std::span<const PointPair> pairs) {
  const EssentialMatrix E = solve_eight_point(pairs);
  const CheiralityResult sel = cheirality_select(decompose_essential(E), pairs);
  return sel.pose.inverse();
}

namespace {

struct HypothesisScore {
  int inliers = -1;
  double truncated_cost = 0.0;

  bool better_than(const HypothesisScore& o) const {
    if (inliers != o.inliers) return inliers > o.inliers;
    return truncated_cost < o.truncated_cost;
  }
};

HypothesisScore score_hypothesis(const EssentialMatrix& E, std::span<const PointPair> pairs,
                                 const E0Options& options) {
  HypothesisScore s{0, 0.0};
  for (const auto& p : pairs) {
    double d = options.tau;
    try {
      d = sampson_distance(p.first, p.second, E, options.denominator);
    } catch (const Error&) {
      d = options.tau;
    }
    if (d < options.tau) {
      ++s.inliers;
      s.truncated_cost += d;
    } else {
      s.truncated_cost += options.tau;
    }
  }
  return s;
}

}  // namespace

EssentialMatrix estimate_E0(const CorrespondenceSet& corr, const E0Options& options) {
  const std::size_t n = corr.pairs.size();
  if (n < 8) {
    throw Error(ErrorCode::kInsufficientCorrespondences,
                "E0 needs at least 8 correspondences, got " + std::to_string(n));
  }
  const std::vector<PointPair> pairs = normalized_pairs(corr);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corr.pairs[a].confidence > corr.pairs[b].confidence;
  });

  auto subset = [&](std::span<const std::size_t> idx) {
    std::vector<PointPair> s;
    s.reserve(idx.size());
    for (std::size_t i : idx) s.push_back(pairs[i]);
    return s;
  };

  bool have_best = false;
  EssentialMatrix best_E = Mat3::Zero();
  HypothesisScore best_score;
  auto consider = [&](std::span<const std::size_t> idx) {
    EssentialMatrix E;
    try {
      E = solve_eight_point(subset(idx));
    } catch (const Error&) {
      return;
    }
    const HypothesisScore s = score_hypothesis(E, pairs, options);
    if (!have_best || s.better_than(best_score)) {
      best_E = E;
      best_score = s;
      have_best = true;
    }
  };

  const std::size_t seed_size = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(options.seed_size, 8)), 8, n);
  consider(std::span<const std::size_t>(order.data(), seed_size));

  // Resample 8-subsets from the confidence-ranked pool.
  const std::size_t pool = std::min(n, std::max<std::size_t>(2 * seed_size, 8));
  Rng rng(options.seed);
  std::vector<std::size_t> pool_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool));
  for (int it = 0; it < options.iterations; ++it) {
    for (std::size_t k = 0; k < 8; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool - 1);
      std::swap(pool_idx[k], pool_idx[pick(rng)]);
    }
    consider(std::span<const std::size_t>(pool_idx.data(), 8));
  }
  if (!have_best) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "no non-degenerate eight-point hypothesis for E0");
  }
  return best_E;
}

}  // namespace epigraph
