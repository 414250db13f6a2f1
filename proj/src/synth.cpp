#include "epigraph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "epigraph/error.hpp"
#include "epigraph/text_io.hpp"

namespace epigraph {

std::string PairId::str() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%06d_%06d", frame_i, frame_j);
  return sequence + buf;
}

void CorrespondenceSet::validate() const {
  intrinsics.validate();
  if (image.width <= 0 || image.height <= 0) {
    throw Error(ErrorCode::kValidation, "image size must be positive");
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& c = pairs[i];
    if (!(c.confidence >= 0.0 && c.confidence <= 1.0)) {
      throw Error(ErrorCode::kValidation, "pair " + std::to_string(i) + ": confidence " +
                                              format_double(c.confidence) + " outside [0,1]");
    }
    if (!image.contains(c.p1) || !image.contains(c.p2)) {
      throw Error(ErrorCode::kValidation,
                  "pair " + std::to_string(i) + ": pixel outside the image bounds");
    }
  }
}

SceneSpec wide_baseline_preset(std::uint64_t seed, const Pose& pose, int n_points) {
  SceneSpec s;
  s.seed = seed;
  s.pose = pose;
  s.n_points = n_points;
  s.noise_px = 0.5;
  s.outlier_fraction = 0.7;
  return s;
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  if (spec.n_points < 1) throw Error(ErrorCode::kInvalidInput, "n_points must be >= 1");
  if (!(spec.outlier_fraction >= 0.0 && spec.outlier_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidInput, "outlier_fraction must be in [0, 1)");
  }
  if (!(spec.depth_min > 0.0 && spec.depth_max >= spec.depth_min)) {
    throw Error(ErrorCode::kInvalidInput, "depth range must be positive and ordered");
  }
  if (!(spec.noise_px >= 0.0)) throw Error(ErrorCode::kInvalidInput, "noise_px must be >= 0");
  spec.intrinsics.validate();

  Rng rng(spec.seed);
  std::uniform_real_distribution<double> u_dist(0.0, spec.image.width);
  std::uniform_real_distribution<double> v_dist(0.0, spec.image.height);
  std::uniform_real_distribution<double> depth_dist(spec.depth_min, spec.depth_max);
  std::normal_distribution<double> noise(0.0, 1.0);

  const Mat3 Kinv = spec.intrinsics.inverse_matrix();
  const Pose to_second = spec.pose.inverse();  // X2 = to_second(X1)

  SyntheticScene scene;
  auto& corr = scene.correspondences;
  corr.intrinsics = spec.intrinsics;
  corr.image = spec.image;
  corr.gt_relative = spec.pose;
  corr.pair_id = spec.pair_id;
  corr.pairs.reserve(static_cast<std::size_t>(spec.n_points));

  constexpr int kMaxAttempts = 10000;
  for (int k = 0; k < spec.n_points; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const Vec2 pix(u_dist(rng), v_dist(rng));
      const double depth = depth_dist(rng);
      const Vec3 X1 = depth * (Kinv * Vec3(pix.x(), pix.y(), 1.0));
      const Vec3 X2 = to_second.transform(X1);
      if (!(X2.z() > 1e-9)) continue;
      Vec2 p1 = pix;
      Vec2 p2 = project_to_pixel(X2, spec.intrinsics);
      if (spec.noise_px > 0.0) {
        p1 += spec.noise_px * Vec2(noise(rng), noise(rng));
        p2 += spec.noise_px * Vec2(noise(rng), noise(rng));
      }
      if (!spec.image.contains(p1) || !spec.image.contains(p2)) continue;
      corr.pairs.push_back({p1, p2, 1.0});
      scene.points.push_back(X1);
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorCode::kUnprojectableScene,
                  "no point in the depth range projects into the second image");
    }
  }

  const int n = spec.n_points;
  const int n_inliers = static_cast<int>(std::lround((1.0 - spec.outlier_fraction) * n));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  scene.inlier.assign(static_cast<std::size_t>(n), true);
  std::uniform_real_distribution<double> conf_dist(0.0, 0.5);
  for (int k = 0; k < n - n_inliers; ++k) {
    const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
    scene.inlier[idx] = false;
    corr.pairs[idx].p2 = Vec2(u_dist(rng), v_dist(rng));
    corr.pairs[idx].confidence = conf_dist(rng);
  }
  return scene;
}

const char* motion_model_name(MotionModel m) {
  switch (m) {
    case MotionModel::kForward: return "forward";
    case MotionModel::kArc: return "arc";
    case MotionModel::kRandomWalk: return "random-walk";
  }
  return "forward";
}

MotionModel parse_motion_model(const std::string& name) {
  if (name == "forward") return MotionModel::kForward;
  if (name == "arc") return MotionModel::kArc;
  if (name == "random-walk" || name == "random_walk") return MotionModel::kRandomWalk;
  throw Error(ErrorCode::kConfig, "unknown motion model '" + name + "'");
}

void Trajectory::validate() const {
  if (!(fps > 0.0)) throw Error(ErrorCode::kValidation, "trajectory fps must be > 0");
  if (frame_indices.size() != poses.size()) {
    throw Error(ErrorCode::kValidation, "trajectory index/pose count mismatch");
  }
  for (std::size_t k = 1; k < frame_indices.size(); ++k) {
    if (frame_indices[k] <= frame_indices[k - 1]) {
      throw Error(ErrorCode::kValidation, "trajectory frame indices must strictly increase");
    }
  }
}

Trajectory generate_trajectory(std::uint64_t seed, int n_frames, MotionModel model,
                               const TrajectoryOptions& options) {
  if (n_frames < 2) throw Error(ErrorCode::kInvalidInput, "n_frames must be >= 2");
  Trajectory traj;
  traj.fps = options.fps;
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Pose current = Pose::identity();
  for (int k = 0; k < n_frames; ++k) {
    if (k > 0) {
      switch (model) {
        case MotionModel::kForward:
          current = Pose{Quaternion::identity(), Vec3(0.0, 0.0, options.step * k)};
          break;
        case MotionModel::kArc:
          current = current * Pose{Quaternion::from_axis_angle(Vec3::UnitZ(), options.yaw_rate),
                                   Vec3(options.step, 0.0, 0.0)};
          break;
        case MotionModel::kRandomWalk: {
          const Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
          const double angle = options.jitter_rot * gauss(rng);
          const Quaternion dq = axis.norm() > 0.0 ? Quaternion::from_axis_angle(axis, angle)
                                                  : Quaternion::identity();
          const Vec3 dt = Vec3(0.0, 0.0, options.step) +
                          options.jitter_trans * Vec3(gauss(rng), gauss(rng), gauss(rng));
          current = current * Pose{dq.canonical(), dt};
          break;
        }
      }
    }
    traj.poses.push_back(current);
    traj.frame_indices.push_back(k);
  }
  return traj;
}

int SamplingSpec::step(double fps) const {
  const long d = std::lround(fps * spacing);
  if (d < 1) {
    throw Error(ErrorCode::kInvalidInput, "temporal spacing yields a frame step below 1");
  }
  return static_cast<int>(d);
}

std::vector<SampledPair> sample_pairs(const Trajectory& traj, const SamplingSpec& spec) {
  traj.validate();
  const int d = spec.step(traj.fps);
  const int n = static_cast<int>(traj.size());
  if (d >= n) {
    throw Error(ErrorCode::kEmptySampling,
                "frame step d=" + std::to_string(d) + " (fps " + format_double(traj.fps) +
                    " x spacing " + format_double(spec.spacing) + "s) leaves no pairs in " +
                    std::to_string(n) + " frames");
  }
  std::vector<SampledPair> out;
  out.reserve(static_cast<std::size_t>(n - d));
  for (int i = 0; i + d < n; ++i) {
    out.push_back({traj.frame_indices[static_cast<std::size_t>(i)],
                   traj.frame_indices[static_cast<std::size_t>(i + d)],
                   relative_pose(traj.poses[static_cast<std::size_t>(i)],
                                 traj.poses[static_cast<std::size_t>(i + d)])});
  }
  return out;
}

std::vector<SyntheticScene> synthesize_pairs(const Trajectory& traj,
                                             const std::vector<SampledPair>& pairs,
                                             const SceneSpec& scene_template,
                                             const std::string& sequence) {
  (void)traj;
  std::vector<SyntheticScene> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    SceneSpec s = scene_template;
    s.pose = p.gt_relative;
    s.pair_id = PairId{sequence, p.i, p.j};
    s.seed = substream_seed(scene_template.seed, s.pair_id.str());
    out.push_back(generate_scene(s));
  }
  return out;
}

std::string format_correspondences(const CorrespondenceSet& set) {
  set.validate();
  std::ostringstream os;
  const auto& K = set.intrinsics;
  os << "# epigraph-corr v1 " << set.image.width << ' ' << set.image.height << ' '
     << format_double(K.fx) << ' ' << format_double(K.fy) << ' ' << format_double(K.cx) << ' '
     << format_double(K.cy) << '\n';
  os << "# pair_id " << set.pair_id.sequence << ' ' << set.pair_id.frame_i << ' '
     << set.pair_id.frame_j << '\n';
  for (const auto& c : set.pairs) {
    os << format_double(c.p1.x()) << ' ' << format_double(c.p1.y()) << ' '
       << format_double(c.p2.x()) << ' ' << format_double(c.p2.y()) << ' '
       << format_double(c.confidence) << '\n';
  }
  if (set.gt_relative) {
    const auto& q = set.gt_relative->rotation;
    const auto& t = set.gt_relative->translation;
    os << "# gt_relative " << format_double(q.w) << ' ' << format_double(q.x) << ' '
       << format_double(q.y) << ' ' << format_double(q.z) << ' ' << format_double(t.x()) << ' '
       << format_double(t.y()) << ' ' << format_double(t.z()) << '\n';
  }
  return os.str();
}

CorrespondenceSet parse_correspondences(const std::string& text) {
  CorrespondenceSet set;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  bool trailer_seen = false;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (!header_seen) {
      if (tok.size() != 9 || tok[0] != "#" || tok[1] != "epigraph-corr") {
        fail("expected '# epigraph-corr v1 <width> <height> <fx> <fy> <cx> <cy>'");
      }
      if (tok[2] != "v1") {
        throw Error(ErrorCode::kSchema, where + ": unsupported correspondence format " + tok[2]);
      }
      set.image.width = static_cast<int>(parse_int(tok[3], where));
      set.image.height = static_cast<int>(parse_int(tok[4], where));
      set.intrinsics = {parse_double(tok[5], where), parse_double(tok[6], where),
                        parse_double(tok[7], where), parse_double(tok[8], where)};
      header_seen = true;
      continue;
    }
    if (tok[0] == "#") {
      if (tok.size() >= 2 && tok[1] == "gt_relative") {
        if (tok.size() != 9) fail("gt_relative needs 7 values");
        Pose p;
        p.rotation = Quaternion{parse_double(tok[2], where), parse_double(tok[3], where),
                                parse_double(tok[4], where), parse_double(tok[5], where)};
        p.translation = Vec3(parse_double(tok[6], where), parse_double(tok[7], where),
                             parse_double(tok[8], where));
        set.gt_relative = p;
        trailer_seen = true;
      } else if (tok.size() >= 2 && tok[1] == "pair_id") {
        if (tok.size() != 5) fail("pair_id needs <sequence> <i> <j>");
        set.pair_id = PairId{tok[2], static_cast<int>(parse_int(tok[3], where)),
                             static_cast<int>(parse_int(tok[4], where))};
      }
      continue;
    }
    if (trailer_seen) fail("correspondence after the gt_relative block");
    if (tok.size() != 5) {
      fail("expected 5 fields 'x1 y1 x2 y2 conf', got " + std::to_string(tok.size()));
    }
    Correspondence c;
    c.p1 = Vec2(parse_double(tok[0], where), parse_double(tok[1], where));
    c.p2 = Vec2(parse_double(tok[2], where), parse_double(tok[3], where));
    c.confidence = parse_double(tok[4], where);
    set.pairs.push_back(c);
  }
  if (!header_seen) throw Error(ErrorCode::kParse, "missing '# epigraph-corr' header");
  set.validate();
  return set;
}

void save_correspondences(const CorrespondenceSet& set, const std::filesystem::path& path) {
  write_text_file(path, format_correspondences(set));
}

CorrespondenceSet load_correspondences(const std::filesystem::path& path) {
  try {
    return parse_correspondences(read_text_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string format_trajectory(const Trajectory& traj) {
  std::ostringstream os;
  for (const auto& pose : traj.poses) {
    const Mat3 R = pose.rotation_matrix();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) os << format_double(R(r, c)) << ' ';
      os << format_double(pose.translation[r]) << (r == 2 ? '\n' : ' ');
    }
  }
  return os.str();
}

Trajectory parse_trajectory(const std::string& text, double fps) {
  Trajectory traj;
  traj.fps = fps;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (tok.size() != 12) {
      throw Error(ErrorCode::kParse, where + ": expected 12 values, got " + std::to_string(tok.size()));
    }
    Mat3 R;
    Vec3 t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) R(r, c) = parse_double(tok[static_cast<std::size_t>(4 * r + c)], where);
      t[r] = parse_double(tok[static_cast<std::size_t>(4 * r + 3)], where);
    }
    // Printed trajectories carry limited precision; snap to the nearest rotation.
    const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (orth > 1e-3 || R.determinant() < 0.0) {
      throw Error(ErrorCode::kValidation, where + ": rotation block is not a rotation");
    }
    Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 Rn = svd.matrixU() * svd.matrixV().transpose();
    traj.poses.push_back(Pose::from_rt(Rn, t));
    traj.frame_indices.push_back(static_cast<int>(traj.poses.size()) - 1);
  }
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  write_text_file(path, format_trajectory(traj));
}

Trajectory load_trajectory(const std::filesystem::path& path, double fps) {
  return parse_trajectory(read_text_file(path), fps);
}

}  // namespace epigraph
