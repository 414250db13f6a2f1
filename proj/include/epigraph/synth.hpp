#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epigraph/geom.hpp"

namespace epigraph {

struct ImageSize {
  int width = 640;
  int height = 480;
  bool contains(const Vec2& p) const {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width && p.y() <= height;
  }
  bool operator==(const ImageSize&) const = default;
};

struct PairId {
  std::string sequence = "seq";
  int frame_i = 0;
  int frame_j = 1;

  /// "<sequence>_<i>_<j>" with zero-padded frame numbers.
  std::string str() const;
  bool operator==(const PairId&) const = default;
};

struct Correspondence {
  Vec2 p1;
  Vec2 p2;
  double confidence = 1.0;

  bool operator==(const Correspondence& o) const {
    return p1 == o.p1 && p2 == o.p2 && confidence == o.confidence;
  }
};

/// Matched pixel pairs for one image pair.
struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
  Intrinsics intrinsics;
  ImageSize image;
  std::optional<Pose> gt_relative;  // second camera in the first camera's frame
  PairId pair_id;

  /// Confidences in [0,1] and pixels inside the image; throws Error(kValidation).
  void validate() const;
  std::size_t size() const { return pairs.size(); }
  bool operator==(const CorrespondenceSet&) const = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_points = 100;
  double depth_min = 4.0;
  double depth_max = 20.0;
  Pose pose;  // second camera in the first camera's frame
  Intrinsics intrinsics;
  ImageSize image;
  double noise_px = 0.0;
  double outlier_fraction = 0.0;
  PairId pair_id;
};

/// The 30%-inlier stress regime: 70% of matches are uniform outliers.
SceneSpec wide_baseline_preset(std::uint64_t seed, const Pose& pose, int n_points = 200);

struct SyntheticScene {
  CorrespondenceSet correspondences;
  std::vector<bool> inlier;   // per pair
  std::vector<Vec3> points;   // first-camera frame, per pair
};

/// Points uniform in the first camera's frustum within the depth range,
/// visible in both images. Exactly n - round((1 - outlier_fraction) * n)
/// pairs get a uniform random second pixel and a confidence in [0, 0.5].
SyntheticScene generate_scene(const SceneSpec& spec);

enum class MotionModel { kForward, kArc, kRandomWalk };

const char* motion_model_name(MotionModel m);
MotionModel parse_motion_model(const std::string& name);

struct Trajectory {
  std::vector<Pose> poses;  // camera-to-world
  std::vector<int> frame_indices;
  double fps = 10.0;

  std::size_t size() const { return poses.size(); }
  void validate() const;
};

struct TrajectoryOptions {
  double step = 0.1;            // meters per frame
  double yaw_rate = 0.0349066;  // radians per frame (arc), 2 degrees
  double jitter_rot = 0.0087;   // radians (random walk)
  double jitter_trans = 0.02;   // meters (random walk)
  double fps = 10.0;
};

/// forward: (I, (0, 0, step k)). arc: constant per-frame motion
/// (Rz(yaw_rate), (step, 0, 0)) so yaw advances uniformly. random-walk:
/// forward steps with seeded rotation and translation jitter.
Trajectory generate_trajectory(std::uint64_t seed, int n_frames, MotionModel model,
                               const TrajectoryOptions& options = {});

struct SamplingSpec {
  double spacing = 0.1;  // seconds
  /// round(fps * spacing); throws Error(kInvalidInput) when < 1.
  int step(double fps) const;
};

struct SampledPair {
  int i = 0;
  int j = 0;
  Pose gt_relative;
};

/// All pairs (i, i + d) with gt_relative = T_i^-1 T_{i+d}.
std::vector<SampledPair> sample_pairs(const Trajectory& traj, const SamplingSpec& spec);

/// Correspondences for every sampled pair; the scene template's pose,
/// pair id and seed are replaced per pair.
std::vector<SyntheticScene> synthesize_pairs(const Trajectory& traj,
                                             const std::vector<SampledPair>& pairs,
                                             const SceneSpec& scene_template,
                                             const std::string& sequence);

std::string format_correspondences(const CorrespondenceSet& set);
CorrespondenceSet parse_correspondences(const std::string& text);
void save_correspondences(const CorrespondenceSet& set, const std::filesystem::path& path);
CorrespondenceSet load_correspondences(const std::filesystem::path& path);

/// KITTI odometry layout: 12 row-major values of [R|t] per line.
std::string format_trajectory(const Trajectory& traj);
Trajectory parse_trajectory(const std::string& text, double fps = 10.0);
void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path, double fps = 10.0);

}  // namespace epigraph
