#include "epigraph/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <json.hpp>

#include "epigraph/error.hpp"
#include "epigraph/text_io.hpp"

namespace epigraph {

namespace {

void require_rotation(const Mat3& R, const char* what) {
  const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!R.allFinite() || orth > 1e-6 || std::abs(R.determinant() - 1.0) > 1e-6) {
    throw Error(ErrorCode::kValidation, std::string(what) + " is not a rotation matrix");
  }
}

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::kValidation, "trajectory lengths differ: " + std::to_string(a) +
                                            " vs " + std::to_string(b));
  }
}

nlohmann::ordered_json num(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json();
}

}  // namespace

double dre(const Mat3& R_pred, const Mat3& R_gt) {
  require_rotation(R_pred, "predicted rotation");
  require_rotation(R_gt, "ground-truth rotation");
  const Mat3 D = R_gt.transpose() * R_pred;
  const Vec3 axis(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
  return rad2deg(std::atan2(0.5 * axis.norm(), 0.5 * (D.trace() - 1.0)));
}

double dre(const Quaternion& q_pred, const Quaternion& q_gt) {
  return dre(quat_to_rot(q_pred), quat_to_rot(q_gt));
}

double dte(const Vec3& t_pred, const Vec3& t_gt, bool* degenerate) {
  const double a = t_pred.norm(), b = t_gt.norm();
  if (!(a > 0.0) || !(b > 0.0)) {
    if (degenerate) *degenerate = true;
    return 90.0;
  }
  if (degenerate) *degenerate = false;
  return rad2deg(std::atan2(t_pred.cross(t_gt).norm(), t_pred.dot(t_gt)));
}

std::vector<Pose> chain(const std::vector<Pose>& relatives, const Pose& origin) {
  std::vector<Pose> out;
  out.reserve(relatives.size() + 1);
  out.push_back(origin);
  for (const Pose& r : relatives) out.push_back(out.back() * r);
  return out;
}

std::vector<double> ape(const std::vector<Pose>& pred, const std::vector<Pose>& gt) {
  require_same_length(pred.size(), gt.size());
  std::vector<double> out(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    out[k] = (pred[k].translation - gt[k].translation).norm();
  }
  return out;
}

std::vector<double> ape_r(const std::vector<Pose>& pred, const std::vector<Pose>& gt) {
  require_same_length(pred.size(), gt.size());
  std::vector<double> out(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    out[k] = dre(pred[k].rotation_matrix(), gt[k].rotation_matrix());
  }
  return out;
}

double ate(const std::vector<Pose>& pred, const std::vector<Pose>& gt) {
  require_same_length(pred.size(), gt.size());
  if (pred.empty()) throw Error(ErrorCode::kValidation, "ATE of an empty trajectory");
  double s = 0.0;
  for (double e : ape(pred, gt)) s += e * e;
  return std::sqrt(s / static_cast<double>(pred.size()));
}

std::vector<Pose> align_trajectory(const std::vector<Pose>& pred, const std::vector<Pose>& gt,
                                   bool with_scale) {
  require_same_length(pred.size(), gt.size());
  if (pred.size() < 3) return pred;
  Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(pred.size()));
  Eigen::Matrix3Xd dst(3, static_cast<Eigen::Index>(gt.size()));
  for (std::size_t k = 0; k < pred.size(); ++k) {
    src.col(static_cast<Eigen::Index>(k)) = pred[k].translation;
    dst.col(static_cast<Eigen::Index>(k)) = gt[k].translation;
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, with_scale);
  const Mat3 sR = T.topLeftCorner<3, 3>();
  const double s = std::cbrt(sR.determinant());
  const Mat3 R = sR / s;
  const Vec3 t = T.topRightCorner<3, 1>();
  std::vector<Pose> out;
  out.reserve(pred.size());
  for (const Pose& p : pred) {
    out.push_back(Pose::from_rt(R * p.rotation_matrix(), sR * p.translation + t));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

EvalSummary summarize(const std::vector<PairMetric>& pairs, const std::vector<FrameMetric>& frames) {
  EvalSummary s;
  s.n_pairs = pairs.size();
  s.n_frames = frames.size();
  std::vector<double> dres, dtes, apes, apers;
  for (const auto& p : pairs) {
    dres.push_back(p.dre_deg);
    dtes.push_back(p.dte_deg);
  }
  double sq = 0.0;
  for (const auto& f : frames) {
    apes.push_back(f.ape_m);
    apers.push_back(f.ape_r_deg);
    sq += f.ape_m * f.ape_m;
  }
  s.ate_m = frames.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : std::sqrt(sq / static_cast<double>(frames.size()));
  s.ape_mean_m = mean_of(apes);
  s.ape_r_mean_deg = mean_of(apers);
  s.dte_mean_deg = mean_of(dtes);
  s.dre_mean_deg = mean_of(dres);
  s.dte_median_deg = median_of(dtes);
  s.dre_median_deg = median_of(dres);
  return s;
}

EvalRecord make_record(const std::string& label, const std::vector<std::string>& pair_ids,
                       const std::vector<Pose>& pred_relatives,
                       const std::vector<Pose>& gt_relatives,
                       const std::vector<Pose>& pred_traj, const std::vector<Pose>& gt_traj,
                       const std::vector<int>& frame_indices) {
  require_same_length(pred_relatives.size(), gt_relatives.size());
  require_same_length(pair_ids.size(), gt_relatives.size());
  require_same_length(pred_traj.size(), gt_traj.size());
  require_same_length(frame_indices.size(), gt_traj.size());
  EvalRecord r;
  r.label = label;
  for (std::size_t i = 0; i < pred_relatives.size(); ++i) {
    PairMetric m;
    m.pair_id = pair_ids[i];
    m.dre_deg = dre(pred_relatives[i].rotation_matrix(), gt_relatives[i].rotation_matrix());
    m.dte_deg = dte(pred_relatives[i].translation, gt_relatives[i].translation, &m.dte_degenerate);
    r.pairs.push_back(m);
  }
  const auto a = ape(pred_traj, gt_traj);
  const auto ar = ape_r(pred_traj, gt_traj);
  for (std::size_t k = 0; k < a.size(); ++k) r.frames.push_back({frame_indices[k], a[k], ar[k]});
  r.summary = summarize(r.pairs, r.frames);
  return r;
}

std::string format_pairs_csv(const EvalRecord& r) {
  std::string out = "pair_id,dre_deg,dte_deg\n";
  for (const auto& p : r.pairs) {
    out += p.pair_id + "," + format_double(p.dre_deg) + "," + format_double(p.dte_deg) + "\n";
  }
  return out;
}

std::string format_frames_csv(const EvalRecord& r) {
  std::string out = "frame,ape_m,ape_r_deg\n";
  for (const auto& f : r.frames) {
    out += std::to_string(f.frame) + "," + format_double(f.ape_m) + "," + format_double(f.ape_r_deg) + "\n";
  }
  return out;
}

std::string format_summary_json(const std::vector<EvalRecord>& records) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& r : records) {
    const EvalSummary& s = r.summary;
    nlohmann::ordered_json e;
    e["n_pairs"] = s.n_pairs;
    e["n_frames"] = s.n_frames;
    e["ate_m"] = num(s.ate_m);
    e["ape_mean_m"] = num(s.ape_mean_m);
    e["ape_r_mean_deg"] = num(s.ape_r_mean_deg);
    e["dte_mean_deg"] = num(s.dte_mean_deg);
    e["dre_mean_deg"] = num(s.dre_mean_deg);
    e["dte_median_deg"] = num(s.dte_median_deg);
    e["dre_median_deg"] = num(s.dre_median_deg);
    j[r.label.empty() ? "default" : r.label] = e;
  }
  return j.dump(2) + "\n";
}

void run_report(const std::vector<EvalRecord>& records, const std::filesystem::path& dir) {
  for (const auto& r : records) {
    const std::string prefix = r.label.empty() ? std::string() : r.label + "_";
    write_text_file(dir / (prefix + "pairs.csv"), format_pairs_csv(r));
    write_text_file(dir / (prefix + "frames.csv"), format_frames_csv(r));
  }
  write_text_file(dir / "summary.json", format_summary_json(records));
}

}  // namespace epigraph
