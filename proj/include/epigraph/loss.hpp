#pragma once

#include <array>
#include <string>

#include "epigraph/geom.hpp"

namespace epigraph {

/// Network output: q (unit, any hemisphere), unit translation direction and
/// nonnegative translation magnitude. The full translation is t_raw * t_dir.
struct PosePrediction {
  Vec4 q = Vec4(1, 0, 0, 0);
  Vec3 t_dir = Vec3::UnitZ();
  double t_raw = 1.0;

  Vec3 translation() const { return t_raw * t_dir; }
  Pose pose() const;
};

/// Gradient of a scalar with respect to (q, t_dir, t_raw), each treated as
/// a free variable.
struct PredictionGrad {
  Vec4 q = Vec4::Zero();
  Vec3 t_dir = Vec3::Zero();
  double t_raw = 0.0;

  PredictionGrad& operator+=(const PredictionGrad& o);
  PredictionGrad operator*(double s) const;
};

struct LossWeights {
  double pose = 1.0;
  double frob = 1.0;
  double svd = 1.0;
  double yaw = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

enum class QuatNorm { kL2, kL1 };

struct LossOptions {
  QuatNorm quat_norm = QuatNorm::kL2;
  // Build both essential matrices from unit translations instead of the
  // full-magnitude ones.
  bool unit_essential = false;

  bool operator==(const LossOptions&) const = default;
};

struct LossBreakdown {
  double quat = 0.0;
  double t_dir = 0.0;
  double t_scale = 0.0;
  double frob = 0.0;
  double svd = 0.0;
  double yaw = 0.0;
  double total = 0.0;
  bool t_pred_degenerate = false;  // zero predicted translation

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown operator*(double s) const;
};

enum class LossTerm { kQuat, kTDir, kTScale, kFrob, kSvd, kYaw };
inline constexpr std::array<LossTerm, 6> kAllLossTerms = {
    LossTerm::kQuat, LossTerm::kTDir, LossTerm::kTScale,
    LossTerm::kFrob, LossTerm::kSvd,  LossTerm::kYaw};
const char* loss_term_name(LossTerm term);

struct LossTarget {
  Pose pose;
  EssentialMatrix essential;  // [t_gt]x R_gt, unit t_gt when unit_essential
};

LossTarget make_loss_target(const Pose& gt, const LossOptions& options = {});

/// Hemisphere-aligned ||q~ - q_gt||. Throws Error(kValidation) when either
/// input is off the unit sphere by more than 1e-6.
double quat_loss(const Quaternion& q_pred, const Quaternion& q_gt, QuatNorm norm = QuatNorm::kL2);
/// 1 - cos(angle). A zero t_pred gives 1 and sets *degenerate.
double t_dir_loss(const Vec3& t_pred, const Vec3& t_gt, bool* degenerate = nullptr);
double t_scale_loss(const Vec3& t_pred, const Vec3& t_gt);
/// ||[t_pred]x R(q_pred) - E_gt||_F.
double frob_loss(const Pose& pose_pred, const EssentialMatrix& E_gt);
/// (sigma1 - sigma2)^2 + sigma3^2 of [t_pred]x R(q_pred).
double svd_loss(const Pose& pose_pred);
double svd_loss_of_matrix(const Mat3& E);
/// |wrap(yaw(q_pred) - yaw(q_gt))| in [0, pi].
double yaw_loss(const Quaternion& q_pred, const Quaternion& q_gt);

/// Weighted composite; pose term = quat + t_dir + t_scale.
LossBreakdown total_loss(const PosePrediction& pred, const LossTarget& gt,
                         const LossWeights& weights = {}, const LossOptions& options = {});

/// Unweighted value of one term and (optionally) its gradient.
double loss_term(LossTerm term, const PosePrediction& pred, const LossTarget& gt,
                 const LossOptions& options, PredictionGrad* grad = nullptr);

/// total_loss plus the gradient of `total`. The hemisphere sign is fixed by
/// the forward pass.
LossBreakdown total_loss_with_grad(const PosePrediction& pred, const LossTarget& gt,
                                   const LossWeights& weights, const LossOptions& options,
                                   PredictionGrad* grad);

}  // namespace epigraph
