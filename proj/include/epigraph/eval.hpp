#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epigraph/geom.hpp"
#include "epigraph/synth.hpp"

namespace epigraph {

/// Geodesic angle of R_gt^T R_pred in degrees, in [0, 180]. Throws
/// Error(kValidation) when either matrix is not a rotation within 1e-6.
double dre(const Mat3& R_pred, const Mat3& R_gt);
double dre(const Quaternion& q_pred, const Quaternion& q_gt);

/// Angle between translation directions in degrees. A zero vector gives 90
/// and sets *degenerate.
double dte(const Vec3& t_pred, const Vec3& t_gt, bool* degenerate = nullptr);

/// T_0 = I, T_k = T_{k-1} * relatives[k-1].
std::vector<Pose> chain(const std::vector<Pose>& relatives, const Pose& origin = Pose::identity());

/// Per-frame position error in meters. Throws Error(kValidation) on a length mismatch.
std::vector<double> ape(const std::vector<Pose>& pred, const std::vector<Pose>& gt);
/// Per-frame rotation error of R_gt^T R_pred in degrees.
std::vector<double> ape_r(const std::vector<Pose>& pred, const std::vector<Pose>& gt);
/// RMS of ape. Throws Error(kValidation) for empty or mismatched input.
double ate(const std::vector<Pose>& pred, const std::vector<Pose>& gt);

/// Least-squares rigid (or similarity) alignment of pred positions onto gt.
std::vector<Pose> align_trajectory(const std::vector<Pose>& pred, const std::vector<Pose>& gt,
                                   bool with_scale = false);

struct PairMetric {
  std::string pair_id;
  double dre_deg = 0.0;
  double dte_deg = 0.0;
  bool dte_degenerate = false;
};

struct FrameMetric {
  int frame = 0;
  double ape_m = 0.0;
  double ape_r_deg = 0.0;
};

struct EvalSummary {
  std::size_t n_pairs = 0;
  std::size_t n_frames = 0;
  double ate_m = 0.0;
  double ape_mean_m = 0.0;
  double ape_r_mean_deg = 0.0;
  double dte_mean_deg = 0.0;
  double dre_mean_deg = 0.0;
  double dte_median_deg = 0.0;
  double dre_median_deg = 0.0;
};

struct EvalRecord {
  std::string label;  // estimator name
  std::vector<PairMetric> pairs;
  std::vector<FrameMetric> frames;
  EvalSummary summary;
};

double mean_of(const std::vector<double>& v);
double median_of(std::vector<double> v);

EvalSummary summarize(const std::vector<PairMetric>& pairs, const std::vector<FrameMetric>& frames);

/// Per-pair metrics for matched (pred, gt) relatives and per-frame metrics
/// for trajectories; fills the summary.
EvalRecord make_record(const std::string& label, const std::vector<std::string>& pair_ids,
                       const std::vector<Pose>& pred_relatives,
                       const std::vector<Pose>& gt_relatives,
                       const std::vector<Pose>& pred_traj, const std::vector<Pose>& gt_traj,
                       const std::vector<int>& frame_indices);

std::string format_pairs_csv(const EvalRecord& r);
std::string format_frames_csv(const EvalRecord& r);
std::string format_summary_json(const std::vector<EvalRecord>& records);

/// Writes pairs.csv and frames.csv per record, prefixed "<label>_" when the
/// label is nonempty, plus one summary.json.
void run_report(const std::vector<EvalRecord>& records, const std::filesystem::path& dir);

}  // namespace epigraph
