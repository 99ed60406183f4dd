#pragma once

// SO(3) / SE(3) in matrix form with the left perturbation convention
// T <- exp(xi^) * T. Twists are always ordered (phi, rho).

#include "plmap/types.hpp"

namespace plmap {

/// Rotation-vector + "translation part" coordinates of an se(3) element.
struct Twist {
  Vec3 phi = Vec3::Zero();
  Vec3 rho = Vec3::Zero();

  static Twist FromVector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 ToVector() const {
    Vec6 v;
    v << phi, rho;
    return v;
  }
};

/// Rigid world->camera transform X_c = R * X_w + t.
class Se3Pose {
 public:
  Se3Pose() = default;
  /// Throws DomainError unless R is orthonormal with det 1 (1e-9 per entry).
  Se3Pose(const Mat3& rotation, const Vec3& translation);

  static Se3Pose Identity() { return {}; }
  /// Skips the orthonormality check; callers guarantee a valid rotation.
  static Se3Pose FromTrusted(const Mat3& rotation, const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 operator*(const Vec3& x) const { return rotation_ * x + translation_; }
  Se3Pose operator*(const Se3Pose& other) const;
  Se3Pose inverse() const;
  Mat4 matrix() const;
  /// Camera center in world coordinates, -R^T t.
  Vec3 center() const { return -rotation_.transpose() * translation_; }

  bool IsValid(double tol = 1e-9) const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

Mat3 hat3(const Vec3& v);
Vec3 vee3(const Mat3& m);
Mat4 hat6(const Twist& xi);

/// Rodrigues formula; 4th order Taylor coefficients below 1e-6 rad.
Mat3 so3_exp(const Vec3& phi);
/// Left Jacobian J = sum_k (phi^)^k / (k+1)!, closed form.
Mat3 so3_left_jacobian(const Vec3& phi);
Se3Pose se3_exp(const Twist& xi);
/// Inverse of se3_exp. Rejects rotations within 1e-6 rad of pi.
Twist se3_log(const Se3Pose& pose);

/// Generator G_j of se(3), j in 1..6 (1..3 rotation, 4..6 translation).
Mat4 se3_generator(int j);

/// d X_c / d xi at xi = 0 for X_c(xi) = exp(xi^) T X_w, i.e. [-X_c^ | I].
Mat36 left_perturbation_point_jacobian(const Vec3& point_camera);

/// Left-multiplicative retraction exp(delta^) * T.
Se3Pose retract_left(const Se3Pose& pose, const Vec6& delta);

}  // namespace plmap
