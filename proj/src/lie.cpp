#include "plmap/lie.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace plmap {
namespace {

constexpr double kSmallAngle = 1e-6;
constexpr double kLogPiMargin = 1e-6;

struct RotationCoeffs {
  double a;  // sin(t)/t
  double b;  // (1 - cos(t))/t^2
  double c;  // (t - sin(t))/t^3
};

RotationCoeffs Coefficients(double theta) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0};
  }
  const double s = std::sin(theta);
  // 1 - cos(t) = 2 sin^2(t/2) avoids cancellation just above the switch.
  const double h = std::sin(0.5 * theta);
  return {s / theta, 2.0 * h * h / t2, (theta - s) / (t2 * theta)};
}

}  // namespace

Se3Pose::Se3Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!IsValid()) {
    throw DomainError("Se3Pose: rotation is not orthonormal with det 1");
  }
  if (!translation.allFinite()) {
    throw DomainError("Se3Pose: non-finite translation");
  }
}

Se3Pose Se3Pose::FromTrusted(const Mat3& rotation, const Vec3& translation) {
  Se3Pose pose;
  pose.rotation_ = rotation;
  pose.translation_ = translation;
  return pose;
}

Se3Pose Se3Pose::operator*(const Se3Pose& other) const {
  return FromTrusted(rotation_ * other.rotation_,
                     rotation_ * other.translation_ + translation_);
}

Se3Pose Se3Pose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return FromTrusted(rt, -rt * translation_);
}

Mat4 Se3Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

bool Se3Pose::IsValid(double tol) const {
  if (!rotation_.allFinite()) return false;
  const Mat3 err = rotation_.transpose() * rotation_ - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation_.determinant() - 1.0) <= tol;
}

Mat3 hat3(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vec3 vee3(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Mat4 hat6(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = hat3(xi.phi);
  m.topRightCorner<3, 1>() = xi.rho;
  return m;
}

Mat3 so3_exp(const Vec3& phi) {
  const double theta = phi.norm();
  const RotationCoeffs k = Coefficients(theta);
  const Mat3 w = hat3(phi);
  return Mat3::Identity() + k.a * w + k.b * w * w;
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const RotationCoeffs k = Coefficients(theta);
  const Mat3 w = hat3(phi);
  return Mat3::Identity() + k.b * w + k.c * w * w;
}

Se3Pose se3_exp(const Twist& xi) {
  return Se3Pose::FromTrusted(so3_exp(xi.phi),
                              so3_left_jacobian(xi.phi) * xi.rho);
}

Twist se3_log(const Se3Pose& pose) {
  const Mat3& r = pose.rotation();
  const Vec3 skew = vee3(r - r.transpose());  // 2 sin(theta) a
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::atan2(0.5 * skew.norm(), cos_theta);
  if (theta > std::numbers::pi - kLogPiMargin) {
    throw DomainError("se3_log: rotation angle too close to pi");
  }

  Vec3 phi;
  if (theta < kSmallAngle) {
    phi = (0.5 + theta * theta / 12.0) * skew;
  } else if (theta < 0.75 * std::numbers::pi) {
    phi = theta / (2.0 * std::sin(theta)) * skew;
  } else {
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part (1 - cos) a a^T and take its sign from the skew part.
    const Mat3 sym = 0.5 * (r + r.transpose()) - cos_theta * Mat3::Identity();
    int col = 0;
    sym.diagonal().maxCoeff(&col);
    Vec3 axis = sym.col(col).normalized();
    if (axis.dot(skew) < 0.0) axis = -axis;
    phi = theta * axis;
  }

  const Mat3 w = hat3(phi);
  double d;
  if (theta < kSmallAngle) {
    d = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    d = 1.0 / (theta * theta) -
        (1.0 + cos_theta) / (2.0 * theta * std::sin(theta));
  }
  const Mat3 j_inv = Mat3::Identity() - 0.5 * w + d * w * w;
  return {phi, j_inv * pose.translation()};
}

Mat4 se3_generator(int j) {
  if (j < 1 || j > 6) {
    throw DomainError("se3_generator: index must be in 1..6");
  }
  Mat4 g = Mat4::Zero();
  if (j <= 3) {
    g.topLeftCorner<3, 3>() = hat3(Vec3::Unit(j - 1));
  } else {
    g(j - 4, 3) = 1.0;
  }
  return g;
}

Mat36 left_perturbation_point_jacobian(const Vec3& point_camera) {
  Mat36 j;
  j.leftCols<3>() = -hat3(point_camera);
  j.rightCols<3>().setIdentity();
  return j;
}

Se3Pose retract_left(const Se3Pose& pose, const Vec6& delta) {
  return se3_exp(Twist::FromVector(delta)) * pose;
}

}  // namespace plmap
