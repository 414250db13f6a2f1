#pragma once

#include <Eigen/Core>

namespace epigraph {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics. K = [[fx, 0, cx], [0, fy, cy], [0, 0, 1]].
struct Intrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;

  /// Throws Error(kInvalidInput) unless fx, fy > 0 and all fields are finite.
  void validate() const;
  Mat3 matrix() const;
  Mat3 inverse_matrix() const;

  bool operator==(const Intrinsics&) const = default;
};

/// Unit quaternion, w-first. Stored values are kept on the w >= 0 hemisphere.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }
  static Quaternion from_axis_angle(const Vec3& axis, double angle);
  static Quaternion from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

  Vec4 vec() const { return {w, x, y, z}; }
  double norm() const;
  /// Throws Error(kInvalidInput) on a zero-norm quaternion.
  Quaternion normalized() const;
  /// Flips sign so that w >= 0 (first nonzero of x, y, z positive when w == 0).
  Quaternion canonical() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  double dot(const Quaternion& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

  Quaternion operator-() const { return {-w, -x, -y, -z}; }
  /// Hamilton product; quat_to_rot(a * b) == quat_to_rot(a) * quat_to_rot(b).
  Quaternion operator*(const Quaternion& o) const;

  bool operator==(const Quaternion&) const = default;
};

/// Rigid transform p -> R p + t with R = quat_to_rot(rotation).
struct Pose {
  Quaternion rotation;
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_rt(const Mat3& R, const Vec3& t);

  Mat3 rotation_matrix() const;
  Pose inverse() const;
  Pose operator*(const Pose& o) const;
  Vec3 transform(const Vec3& p) const;

  bool operator==(const Pose& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

using EssentialMatrix = Mat3;

/// Homogeneous normalized image point; third component is exactly 1.
using NormalizedPoint = Vec3;

Mat3 quat_to_rot(const Quaternion& q);
Quaternion rot_to_quat(const Mat3& R);

NormalizedPoint normalize_pixel(const Vec2& pixel, const Intrinsics& K);
Vec2 project_to_pixel(const Vec3& point_in_camera, const Intrinsics& K);

Mat3 skew(const Vec3& t);

/// E = [t]x R. Zero translation yields the zero matrix.
EssentialMatrix essential_from_pose(const Pose& pose);

/// Essential matrix in the x2^T E x1 = 0 form for a relative pose given as
/// the second camera's pose in the first camera's frame (T_i^-1 T_j).
EssentialMatrix epipolar_essential(const Pose& relative);

double epipolar_residual(const NormalizedPoint& x1, const NormalizedPoint& x2,
                         const EssentialMatrix& E);

enum class SampsonDenominator {
  kTwoComponent,  // first two entries of E x1 and E^T x2 (classical form)
  kFullNorm,      // full 3-vector norms
};

/// (x2^T E x1)^2 / (|E x1|^2 + |E^T x2|^2). Throws Error(kDegenerateGeometry)
/// when the denominator is below 1e-18.
double sampson_distance(const NormalizedPoint& x1, const NormalizedPoint& x2,
                        const EssentialMatrix& E,
                        SampsonDenominator mode = SampsonDenominator::kTwoComponent);

/// Ti^-1 * Tj, so that Ti * relative_pose(Ti, Tj) == Tj.
Pose relative_pose(const Pose& Ti, const Pose& Tj);

struct YawExtraction {
  double yaw = 0.0;          // (-pi, pi]
  double pitch = 0.0;
  bool gimbal_lock = false;  // |pitch| == pi/2 within 1e-12
};

/// ZYX (yaw-pitch-roll) extraction, yaw = atan2(R(1,0), R(0,0)).
YawExtraction extract_yaw(const Quaternion& q);
double yaw_of(const Quaternion& q);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace epigraph
