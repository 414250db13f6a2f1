#include "epigraph/geom.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "epigraph/error.hpp"

namespace epigraph {

void Intrinsics::validate() const {
  if (!(std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy))) {
    throw Error(ErrorCode::kInvalidInput, "intrinsics must be finite");
  }
  if (!(fx > 0.0 && fy > 0.0)) {
    throw Error(ErrorCode::kInvalidInput, "intrinsics require fx > 0 and fy > 0");
  }
}

Mat3 Intrinsics::matrix() const {
  Mat3 K;
  K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return K;
}

Mat3 Intrinsics::inverse_matrix() const {
  validate();
  Mat3 Kinv;
  Kinv << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
  return Kinv;
}

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) throw Error(ErrorCode::kInvalidInput, "zero rotation axis");
  const Vec3 a = axis / n;
  const double s = std::sin(angle / 2.0);
  return Quaternion{std::cos(angle / 2.0), s * a.x(), s * a.y(), s * a.z()}.canonical();
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kInvalidInput, "cannot normalize a zero-norm quaternion");
  }
  return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::canonical() const {
  bool flip = w < 0.0;
  if (w == 0.0) {
    if (x != 0.0) flip = x < 0.0;
    else if (y != 0.0) flip = y < 0.0;
    else flip = z < 0.0;
  }
  return flip ? -*this : *this;
}

Quaternion Quaternion::operator*(const Quaternion& o) const {
  return {w * o.w - x * o.x - y * o.y - z * o.z,
          w * o.x + x * o.w + y * o.z - z * o.y,
          w * o.y - x * o.z + y * o.w + z * o.x,
          w * o.z + x * o.y - y * o.x + z * o.w};
}

Pose Pose::from_rt(const Mat3& R, const Vec3& t) { return {rot_to_quat(R), t}; }

Mat3 Pose::rotation_matrix() const { return quat_to_rot(rotation); }

Pose Pose::inverse() const {
  const Quaternion qi = rotation.conjugate().canonical();
  return {qi, -(quat_to_rot(qi) * translation)};
}

Pose Pose::operator*(const Pose& o) const {
  const Quaternion q = (rotation * o.rotation).normalized().canonical();
  return {q, rotation_matrix() * o.translation + translation};
}

Vec3 Pose::transform(const Vec3& p) const { return rotation_matrix() * p + translation; }

Mat3 quat_to_rot(const Quaternion& q_in) {
  Quaternion q = q_in;
  const double n = q.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::kInvalidInput, "zero-norm quaternion");
  if (std::abs(n - 1.0) > 1e-6) q = q.normalized();
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Quaternion rot_to_quat(const Mat3& R) {
  if (!R.allFinite()) throw Error(ErrorCode::kInvalidRotation, "rotation has non-finite entries");
  const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = R.determinant();
  if (orth > 1e-6 || std::abs(det - 1.0) > 1e-6) {
    throw Error(ErrorCode::kInvalidRotation,
                "matrix is not a proper rotation (orthogonality error " + std::to_string(orth) +
                    ", det " + std::to_string(det) + ")");
  }
  // Shepperd: branch on the largest of the trace and the diagonal.
  const double tr = R.trace();
  Quaternion q;
  if (tr >= R(0, 0) && tr >= R(1, 1) && tr >= R(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    q = {0.25 * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s, (R(1, 0) - R(0, 1)) / s};
  } else if (R(0, 0) >= R(1, 1) && R(0, 0) >= R(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2));
    q = {(R(2, 1) - R(1, 2)) / s, 0.25 * s, (R(0, 1) + R(1, 0)) / s, (R(0, 2) + R(2, 0)) / s};
  } else if (R(1, 1) >= R(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2));
    q = {(R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25 * s, (R(1, 2) + R(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1));
    q = {(R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s, (R(1, 2) + R(2, 1)) / s, 0.25 * s};
  }
  return q.normalized().canonical();
}

NormalizedPoint normalize_pixel(const Vec2& pixel, const Intrinsics& K) {
  K.validate();
  return {(pixel.x() - K.cx) / K.fx, (pixel.y() - K.cy) / K.fy, 1.0};
}

Vec2 project_to_pixel(const Vec3& p, const Intrinsics& K) {
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

Mat3 skew(const Vec3& t) {
  Mat3 S;
  S << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  return S;
}

EssentialMatrix essential_from_pose(const Pose& pose) {
  return skew(pose.translation) * pose.rotation_matrix();
}

EssentialMatrix epipolar_essential(const Pose& relative) {
  return essential_from_pose(relative.inverse());
}

double epipolar_residual(const NormalizedPoint& x1, const NormalizedPoint& x2,
                         const EssentialMatrix& E) {
  return x2.dot(E * x1);
}

double sampson_distance(const NormalizedPoint& x1, const NormalizedPoint& x2,
                        const EssentialMatrix& E, SampsonDenominator mode) {
  const Vec3 Ex1 = E * x1;
  const Vec3 Etx2 = E.transpose() * x2;
  const double r = x2.dot(Ex1);
  double den = Ex1.head<2>().squaredNorm() + Etx2.head<2>().squaredNorm();
  if (mode == SampsonDenominator::kFullNorm) den = Ex1.squaredNorm() + Etx2.squaredNorm();
  if (!(den >= 1e-18)) {
    throw Error(ErrorCode::kDegenerateGeometry, "Sampson denominator below 1e-18");
  }
  return r * r / den;
}

Pose relative_pose(const Pose& Ti, const Pose& Tj) { return Ti.inverse() * Tj; }

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

YawExtraction extract_yaw(const Quaternion& q) {
  const Mat3 R = quat_to_rot(q);
  YawExtraction out;
  const double s = std::clamp(-R(2, 0), -1.0, 1.0);
  out.pitch = std::asin(s);
  out.gimbal_lock = std::abs(std::abs(R(2, 0)) - 1.0) < 1e-12;
  out.yaw = wrap_angle(std::atan2(R(1, 0), R(0, 0)));
  return out;
}

double yaw_of(const Quaternion& q) { return extract_yaw(q).yaw; }

}  // namespace epigraph
