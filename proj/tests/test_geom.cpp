#include <cmath>
#include <random>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "epigraph/error.hpp"
#include "epigraph/geom.hpp"
#include "epigraph/text_io.hpp"

using namespace epigraph;

namespace {

Eigen::Matrix3d oracle_rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Pose random_pose(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  return {Quaternion::from_axis_angle(axis, std::abs(n(rng))), Vec3(n(rng), n(rng), n(rng))};
}

}  // namespace

TEST(Quaternion, MatchesAngleAxisOracle) {
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    const double angle = 3.0 * std::abs(n(rng));
    const Mat3 R = quat_to_rot(Quaternion::from_axis_angle(axis, angle));
    EXPECT_LT((R - oracle_rotation(axis, angle)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Quaternion, StoredOnNonnegativeHemisphere) {
  const Quaternion q = Quaternion::from_axis_angle(Vec3::UnitZ(), 1.9 * kPi);
  EXPECT_GE(q.w, 0.0);
  const Quaternion c = Quaternion{-0.5, 0.5, -0.5, 0.5}.canonical();
  EXPECT_EQ(c, (Quaternion{0.5, -0.5, 0.5, -0.5}));
  EXPECT_EQ((Quaternion{0.0, -1.0, 0.0, 0.0}.canonical()), (Quaternion{0.0, 1.0, 0.0, 0.0}));
}

TEST(Quaternion, ProductComposesRotations) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Quaternion a = random_pose(rng).rotation, b = random_pose(rng).rotation;
    EXPECT_LT((quat_to_rot(a * b) - quat_to_rot(a) * quat_to_rot(b)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Quaternion, RotationRoundTrip) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Quaternion q = random_pose(rng).rotation;
    const Quaternion back = rot_to_quat(quat_to_rot(q));
    EXPECT_NEAR(std::abs(back.dot(q)), 1.0, 1e-12);
    EXPECT_GE(back.w, 0.0);
  }
  // Near-180 degree rotations use the non-trace branch.
  const Mat3 R = oracle_rotation(Vec3(1, 1, 0), kPi - 1e-9);
  EXPECT_LT((quat_to_rot(rot_to_quat(R)) - R).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Quaternion, ZeroNormIsRejected) {
  EXPECT_THROW((Quaternion{0, 0, 0, 0}.normalized()), Error);
}

TEST(Pose, InverseAndComposition) {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Pose id = a * a.inverse();
    EXPECT_LT(id.translation.norm(), 1e-12);
    EXPECT_LT((id.rotation_matrix() - Mat3::Identity()).norm(), 1e-12);
    const Vec3 p(0.3, -1.2, 2.0);
    EXPECT_LT(((a * b).transform(p) - a.transform(b.transform(p))).norm(), 1e-12);
  }
}

TEST(Pose, RelativePoseReconstructsSecond) {
  Rng rng(5);
  const Pose a = random_pose(rng), b = random_pose(rng);
  const Pose rel = relative_pose(a, b);
  const Pose back = a * rel;
  EXPECT_LT((back.translation - b.translation).norm(), 1e-12);
  EXPECT_LT((back.rotation_matrix() - b.rotation_matrix()).norm(), 1e-12);
}

TEST(Intrinsics, NormalizeAndProject) {
  const Intrinsics K{500, 400, 320, 240};
  const NormalizedPoint x = normalize_pixel(Vec2(420, 140), K);
  EXPECT_DOUBLE_EQ(x.x(), 0.2);
  EXPECT_DOUBLE_EQ(x.y(), -0.25);
  EXPECT_DOUBLE_EQ(x.z(), 1.0);
  const Vec2 px = project_to_pixel(Vec3(0.4, -0.5, 2.0), K);
  EXPECT_DOUBLE_EQ(px.x(), 420.0);
  EXPECT_DOUBLE_EQ(px.y(), 140.0);
  EXPECT_LT((K.matrix() * K.inverse_matrix() - Mat3::Identity()).norm(), 1e-15);
  EXPECT_THROW((Intrinsics{0, 1, 0, 0}.validate()), Error);
}

TEST(Essential, SkewTimesRotation) {
  const Vec3 t(1, 2, 3);
  Mat3 tx;
  tx << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  EXPECT_EQ(skew(t), tx);
  const Pose p{Quaternion::from_axis_angle(Vec3::UnitY(), 0.4), t};
  EXPECT_LT((essential_from_pose(p) - tx * oracle_rotation(Vec3::UnitY(), 0.4)).norm(), 1e-12);
  EXPECT_EQ(essential_from_pose(Pose{p.rotation, Vec3::Zero()}), Mat3::Zero());
}

TEST(Essential, EpipolarConstraintHoldsForProjectedPoints) {
  Rng rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose rel = random_pose(rng);  // second camera in first camera's frame
    const Mat3 E = epipolar_essential(rel);
    for (int i = 0; i < 10; ++i) {
      const Vec3 X1(u(rng), u(rng), 5.0 + u(rng));
      const Vec3 X2 = rel.inverse().transform(X1);
      const Vec3 x1 = X1 / X1.z(), x2 = X2 / X2.z();
      EXPECT_NEAR(epipolar_residual(x1, x2, E), 0.0, 1e-12);
    }
  }
}

TEST(Sampson, MatchesHandFormula) {
  Mat3 E;
  E << 0.1, -0.4, 0.2, 0.3, 0.05, -0.7, -0.2, 0.6, 0.01;
  const Vec3 x1(0.1, -0.2, 1.0), x2(-0.3, 0.25, 1.0);
  const double r = x2.dot(E * x1);
  const Vec3 a = E * x1, b = E.transpose() * x2;
  EXPECT_NEAR(sampson_distance(x1, x2, E), r * r / (a.x() * a.x() + a.y() * a.y() + b.x() * b.x() + b.y() * b.y()), 1e-15);
  EXPECT_NEAR(sampson_distance(x1, x2, E, SampsonDenominator::kFullNorm),
              r * r / (a.squaredNorm() + b.squaredNorm()), 1e-15);
  EXPECT_THROW(sampson_distance(x1, x2, Mat3::Zero()), Error);
}

TEST(Yaw, AtanOfFirstColumn) {
  for (double yaw : {-3.0, -1.0, 0.0, 0.5, 2.5, kPi}) {
    const Mat3 R = oracle_rotation(Vec3::UnitZ(), yaw) * oracle_rotation(Vec3::UnitY(), 0.3);
    const double expected = std::atan2(R(1, 0), R(0, 0));
    EXPECT_NEAR(yaw_of(rot_to_quat(R)), expected, 1e-12);
  }
  const YawExtraction lock = extract_yaw(Quaternion::from_axis_angle(Vec3::UnitY(), kPi / 2));
  EXPECT_TRUE(lock.gimbal_lock);
}

TEST(Yaw, WrapAngle) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_NEAR(wrap_angle(-kPi), kPi, 1e-15);
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  EXPECT_NEAR(wrap_angle(deg2rad(170) - deg2rad(-170)), deg2rad(-20), 1e-15);
}

TEST(TextIo, DoubleRoundTrip) {
  Rng rng(7);
  std::normal_distribution<double> n(0.0, 1e3);
  for (int i = 0; i < 200; ++i) {
    const double v = n(rng);
    EXPECT_EQ(parse_double(format_double(v), "v"), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_THROW(parse_double("1.5x", "v"), Error);
  EXPECT_THROW(parse_int("2.5", "n"), Error);
}

TEST(TextIo, SubstreamsAreIndependentAndStable) {
  EXPECT_EQ(substream_seed(3, "init"), substream_seed(3, "init"));
  EXPECT_NE(substream_seed(3, "init"), substream_seed(3, "shuffle"));
  EXPECT_NE(substream_seed(3, "init"), substream_seed(4, "init"));
}
