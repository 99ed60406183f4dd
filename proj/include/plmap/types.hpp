#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>

namespace plmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Row3 = Eigen::RowVector3d;
using Row6 = Eigen::Matrix<double, 1, 6>;

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument outside an operation's domain (bad depth, index out of
// range, rotation angle at pi, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Point behind the camera or closer than the near plane.
class ProjectionError : public Error {
 public:
  using Error::Error;
};

// Degenerate geometric input: coincident endpoints, zero-length segments,
// singular loci of distance functions, zero covariance.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace plmap
