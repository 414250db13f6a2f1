#include "epigraph/loss.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "epigraph/error.hpp"

namespace epigraph {

namespace {

// Polynomial rotation of a possibly non-unit q. Agrees with quat_to_rot on
// the unit sphere; gradients are taken through this form.
Mat3 rotation_poly(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

// sum_ij G_ij dR_ij/dq
Vec4 rotation_vjp(const Vec4& q, const Mat3& G) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 Dw, Dx, Dy, Dz;
  Dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  Dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  Dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  Dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return {G.cwiseProduct(Dw).sum(), G.cwiseProduct(Dx).sum(), G.cwiseProduct(Dy).sum(),
          G.cwiseProduct(Dz).sum()};
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_unit(const Quaternion& q, const char* what) {
  if (!(std::abs(q.norm() - 1.0) <= 1e-6)) {
    throw Error(ErrorCode::kValidation,
                std::string(what) + " is not a unit quaternion (norm " + std::to_string(q.norm()) + ")");
  }
}

struct Core {
  Vec4 q;
  Vec3 t_dir;
  double t_raw;
  Vec3 t;  // t_raw * t_dir
};

Core core_of(const PosePrediction& p) { return {p.q, p.t_dir, p.t_raw, p.t_raw * p.t_dir}; }

// Chains an upstream gradient on t (the full translation) and R into the
// prediction variables.
void accumulate(const Core& c, const Vec3& dt, const Mat3& dR, PredictionGrad* g) {
  if (!g) return;
  g->t_dir += c.t_raw * dt;
  g->t_raw += dt.dot(c.t_dir);
  g->q += rotation_vjp(c.q, dR);
}

double quat_core(const Vec4& q, const Vec4& g, QuatNorm norm, Vec4* dq) {
  const double s = q.dot(g) >= 0.0 ? 1.0 : -1.0;
  const Vec4 d = s * q - g;
  if (norm == QuatNorm::kL1) {
    if (dq) *dq = s * d.unaryExpr([](double v) { return sign_of(v); });
    return d.cwiseAbs().sum();
  }
  const double n = d.norm();
  if (dq) *dq = n > 0.0 ? Vec4(s * d / n) : Vec4::Zero();
  return n;
}

double t_dir_core(const Vec3& t, const Vec3& g, bool* degenerate, Vec3* dt) {
  const double nt = t.norm();
  const Vec3 gh = g.normalized();
  if (!(nt > 0.0)) {
    if (degenerate) *degenerate = true;
    if (dt) dt->setZero();
    return 1.0;
  }
  const Vec3 th = t / nt;
  const double c = th.dot(gh);
  if (dt) *dt = -(gh - c * th) / nt;
  return 1.0 - c;
}

double t_scale_core(const Vec3& t, const Vec3& g, Vec3* dt) {
  const double nt = t.norm();
  const double diff = nt - g.norm();
  if (dt) *dt = nt > 0.0 ? Vec3(sign_of(diff) * t / nt) : Vec3::Zero();
  return std::abs(diff);
}

// E = [u]x R with u = t or t / |t|. Returns dL/dt and dL/dR given dL/dE.
struct EssentialParts {
  Vec3 u;
  Mat3 R;
  Mat3 E;
  bool unit;
  double t_norm;
};

EssentialParts essential_parts(const Core& c, bool unit) {
  EssentialParts p;
  p.unit = unit;
  p.t_norm = c.t.norm();
  p.u = unit ? (p.t_norm > 0.0 ? Vec3(c.t / p.t_norm) : Vec3::Zero()) : c.t;
  p.R = rotation_poly(c.q);
  p.E = skew(p.u) * p.R;
  return p;
}

void essential_backward(const EssentialParts& p, const Mat3& G, Vec3* dt, Mat3* dR) {
  const Mat3 S = G * p.R.transpose();
  Vec3 du(S(2, 1) - S(1, 2), S(0, 2) - S(2, 0), S(1, 0) - S(0, 1));
  if (p.unit) {
    du = p.t_norm > 0.0 ? Vec3((du - p.u * p.u.dot(du)) / p.t_norm) : Vec3::Zero();
  }
  *dt = du;
  *dR = skew(p.u).transpose() * G;
}

double svd_core(const Mat3& E, Mat3* G) {
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  const double gap = s[0] - s[1];
  if (G) {
    const Mat3& U = svd.matrixU();
    const Mat3& V = svd.matrixV();
    // Below the gap guard the first term is dropped; its coefficient is ~0 there anyway.
    Mat3 g = 2.0 * s[2] * U.col(2) * V.col(2).transpose();
    if (gap > 1e-9) {
      g += 2.0 * gap * (U.col(0) * V.col(0).transpose() - U.col(1) * V.col(1).transpose());
    }
    *G = g;
  }
  return gap * gap + s[2] * s[2];
}

double yaw_core(const Vec4& q, double yaw_gt, Mat3* dR) {
  const Mat3 R = rotation_poly(q);
  const double a = R(1, 0), b = R(0, 0);
  const double d = wrap_angle(std::atan2(a, b) - yaw_gt);
  if (dR) {
    dR->setZero();
    const double den = a * a + b * b;
    if (den > 0.0) {
      const double s = sign_of(d);
      (*dR)(1, 0) = s * b / den;
      (*dR)(0, 0) = -s * a / den;
    }
  }
  return std::abs(d);
}

}  // namespace

Pose PosePrediction::pose() const {
  return {Quaternion::from_vec(q).normalized().canonical(), translation()};
}

PredictionGrad& PredictionGrad::operator+=(const PredictionGrad& o) {
  q += o.q;
  t_dir += o.t_dir;
  t_raw += o.t_raw;
  return *this;
}

PredictionGrad PredictionGrad::operator*(double s) const { return {q * s, t_dir * s, t_raw * s}; }

void LossWeights::validate() const {
  for (double v : {pose, frob, svd, yaw}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kConfig, "loss weights must be finite and nonnegative");
    }
  }
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  quat += o.quat;
  t_dir += o.t_dir;
  t_scale += o.t_scale;
  frob += o.frob;
  svd += o.svd;
  yaw += o.yaw;
  total += o.total;
  t_pred_degenerate = t_pred_degenerate || o.t_pred_degenerate;
  return *this;
}

LossBreakdown LossBreakdown::operator*(double s) const {
  LossBreakdown r = *this;
  r.quat *= s;
  r.t_dir *= s;
  r.t_scale *= s;
  r.frob *= s;
  r.svd *= s;
  r.yaw *= s;
  r.total *= s;
  return r;
}

const char* loss_term_name(LossTerm term) {
  switch (term) {
    case LossTerm::kQuat: return "quat";
    case LossTerm::kTDir: return "t_dir";
    case LossTerm::kTScale: return "t_scale";
    case LossTerm::kFrob: return "frob";
    case LossTerm::kSvd: return "svd";
    case LossTerm::kYaw: return "yaw";
  }
  return "?";
}

LossTarget make_loss_target(const Pose& gt, const LossOptions& options) {
  LossTarget target{gt, essential_from_pose(gt)};
  if (options.unit_essential) {
    const double n = gt.translation.norm();
    if (n > 0.0) target.essential = essential_from_pose(Pose{gt.rotation, gt.translation / n});
  }
  return target;
}

double quat_loss(const Quaternion& q_pred, const Quaternion& q_gt, QuatNorm norm) {
  require_unit(q_pred, "predicted rotation");
  require_unit(q_gt, "ground-truth rotation");
  return quat_core(q_pred.vec(), q_gt.vec(), norm, nullptr);
}

double t_dir_loss(const Vec3& t_pred, const Vec3& t_gt, bool* degenerate) {
  if (degenerate) *degenerate = false;
  return t_dir_core(t_pred, t_gt, degenerate, nullptr);
}

double t_scale_loss(const Vec3& t_pred, const Vec3& t_gt) {
  return t_scale_core(t_pred, t_gt, nullptr);
}

double frob_loss(const Pose& pose_pred, const EssentialMatrix& E_gt) {
  return (essential_from_pose(pose_pred) - E_gt).norm();
}

double svd_loss(const Pose& pose_pred) { return svd_core(essential_from_pose(pose_pred), nullptr); }

double svd_loss_of_matrix(const Mat3& E) { return svd_core(E, nullptr); }

double yaw_loss(const Quaternion& q_pred, const Quaternion& q_gt) {
  return std::abs(wrap_angle(yaw_of(q_pred) - yaw_of(q_gt)));
}

double loss_term(LossTerm term, const PosePrediction& pred, const LossTarget& gt,
                 const LossOptions& options, PredictionGrad* grad) {
  const Core c = core_of(pred);
  if (grad) *grad = PredictionGrad{};
  switch (term) {
    case LossTerm::kQuat: {
      Vec4 dq;
      const double v = quat_core(c.q, gt.pose.rotation.vec(), options.quat_norm, grad ? &dq : nullptr);
      if (grad) grad->q = dq;
      return v;
    }
    case LossTerm::kTDir: {
      Vec3 dt;
      const double v = t_dir_core(c.t, gt.pose.translation, nullptr, grad ? &dt : nullptr);
      accumulate(c, dt, Mat3::Zero(), grad);
      return v;
    }
    case LossTerm::kTScale: {
      Vec3 dt;
      const double v = t_scale_core(c.t, gt.pose.translation, grad ? &dt : nullptr);
      accumulate(c, dt, Mat3::Zero(), grad);
      return v;
    }
    case LossTerm::kFrob: {
      const EssentialParts p = essential_parts(c, options.unit_essential);
      const Mat3 D = p.E - gt.essential;
      const double v = D.norm();
      if (grad && v > 0.0) {
        Vec3 dt;
        Mat3 dR;
        essential_backward(p, D / v, &dt, &dR);
        accumulate(c, dt, dR, grad);
      }
      return v;
    }
    case LossTerm::kSvd: {
      const EssentialParts p = essential_parts(c, options.unit_essential);
      Mat3 G;
      const double v = svd_core(p.E, grad ? &G : nullptr);
      if (grad) {
        Vec3 dt;
        Mat3 dR;
        essential_backward(p, G, &dt, &dR);
        accumulate(c, dt, dR, grad);
      }
      return v;
    }
    case LossTerm::kYaw: {
      Mat3 dR;
      const double v = yaw_core(c.q, yaw_of(gt.pose.rotation), grad ? &dR : nullptr);
      if (grad) grad->q = rotation_vjp(c.q, dR);
      return v;
    }
  }
  return 0.0;
}

LossBreakdown total_loss_with_grad(const PosePrediction& pred, const LossTarget& gt,
                                   const LossWeights& weights, const LossOptions& options,
                                   PredictionGrad* grad) {
  LossBreakdown b;
  if (grad) *grad = PredictionGrad{};
  PredictionGrad g;
  PredictionGrad* gp = grad ? &g : nullptr;
  const auto term = [&](LossTerm t, double weight, double& slot) {
    slot = loss_term(t, pred, gt, options, gp);
    if (grad) *grad += g * weight;
  };
  term(LossTerm::kQuat, weights.pose, b.quat);
  term(LossTerm::kTDir, weights.pose, b.t_dir);
  term(LossTerm::kTScale, weights.pose, b.t_scale);
  term(LossTerm::kFrob, weights.frob, b.frob);
  term(LossTerm::kSvd, weights.svd, b.svd);
  term(LossTerm::kYaw, weights.yaw, b.yaw);
  b.t_pred_degenerate = !(pred.translation().norm() > 0.0);
  b.total = weights.pose * (b.quat + b.t_dir + b.t_scale) + weights.frob * b.frob +
            weights.svd * b.svd + weights.yaw * b.yaw;
  return b;
}

LossBreakdown total_loss(const PosePrediction& pred, const LossTarget& gt,
                         const LossWeights& weights, const LossOptions& options) {
  return total_loss_with_grad(pred, gt, weights, options, nullptr);
}

}  // namespace epigraph
