#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "epigraph/geom.hpp"

namespace epigraph {

struct CorrespondenceSet;

using PointPair = std::pair<NormalizedPoint, NormalizedPoint>;

/// N x 9 matrix with row_i . vec(E) == x2_i^T E x1_i for row-major vec(E).
using ConstraintMatrix = Eigen::Matrix<double, Eigen::Dynamic, 9>;

ConstraintMatrix build_constraint_matrix(std::span<const PointPair> pairs);

/// Row-major flattening used by the constraint matrix.
Eigen::Matrix<double, 9, 1> vec_row_major(const Mat3& M);

/// Frobenius-normalizes and flips sign so the largest-magnitude entry is
/// positive.
EssentialMatrix canonicalize_essential(const EssentialMatrix& E);

/// Nearest matrix (Frobenius) with singular values (s, s, 0),
/// s = (sigma1 + sigma2) / 2.
EssentialMatrix project_to_essential(const Mat3& M);

/// Normalized eight-point: Hartley-conditioned nullspace solve, projection to
/// the essential manifold, canonical sign and unit Frobenius norm.
EssentialMatrix solve_eight_point(std::span<const PointPair> pairs);

struct PoseCandidate {
  Mat3 rotation;
  Vec3 translation;  // unit norm
};

/// Four (R, t) factorizations of E. Each maps first-camera coordinates to
/// second-camera coordinates: X2 = R X1 + t. Order: (R1,+t) (R1,-t) (R2,+t) (R2,-t).
using DecompositionCandidates = std::array<PoseCandidate, 4>;

DecompositionCandidates decompose_essential(const EssentialMatrix& E);

/// Two-view DLT triangulation with P1 = [I|0], P2 = [R|t]. Returns the point
/// in first-camera coordinates.
Vec3 triangulate_dlt(const NormalizedPoint& x1, const NormalizedPoint& x2, const Mat3& R,
                     const Vec3& t);

struct CheiralityResult {
  int index = -1;
  std::array<int, 4> positive_counts{};
  Pose pose;  // X2 = R X1 + t, unit translation
};

/// Picks the candidate with the most points in front of both cameras.
/// Throws AmbiguousCheiralityError when the maximum is shared.
CheiralityResult cheirality_select(const DecompositionCandidates& candidates,
                                   std::span<const PointPair> pairs);

struct E0Options {
  int seed_size = 16;
  int iterations = 32;
  double tau = 1e-4;
  std::uint64_t seed = 0;
  SampsonDenominator denominator = SampsonDenominator::kTwoComponent;
};

/// Initial essential matrix for graph pruning: eight-point on the
/// highest-confidence seed, then a bounded resample of 8-subsets from the
/// confidence-ranked pool. Hypotheses are scored by Sampson inlier count.
EssentialMatrix estimate_E0(const CorrespondenceSet& corr, const E0Options& options = {});

/// Classical pipeline on intrinsics-normalized pairs: eight-point, decompose,
/// cheirality. Returns the relative pose in the T_i^-1 T_j convention (second
/// camera in the first camera's frame) with unit translation.
Pose classical_relative_pose(std::span<const PointPair> pairs);

std::vector<PointPair> normalized_pairs(const CorrespondenceSet& corr);

}  // namespace epigraph
