#pragma once

#include <optional>

#include "plmap/types.hpp"

namespace plmap {

/// Near-plane guard used by projection when none is given.
inline constexpr double kDefaultZMin = 1e-6;

/// Pinhole intrinsics plus optional stereo (or virtual RGB-D) baseline.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::optional<double> baseline;

  /// Validating constructor: fx, fy > 0 and baseline > 0 when present.
  static CameraIntrinsics Create(double fx, double fy, double cx, double cy,
                                 std::optional<double> baseline = {});

  Mat3 K() const;
  Mat3 Kinv() const;
  double RequireBaseline() const;
};

/// u = (fx x/z + cx, fy y/z + cy). Throws ProjectionError when z <= z_min.
Vec2 project(const CameraIntrinsics& cam, const Vec3& point_camera,
             double z_min = kDefaultZMin);

/// K^-1 [u 1]^T * depth. Throws DomainError for non-positive or non-finite
/// depth.
Vec3 backproject(const CameraIntrinsics& cam, const Vec2& pixel, double depth);

/// d project / d X_c.
Mat23 projection_jacobian(const CameraIntrinsics& cam, const Vec3& point_camera,
                          double z_min = kDefaultZMin);

/// Depth from a rectified stereo disparity, b fx / (u_l - u_r). Zero
/// disparity yields +infinity; callers treat the observation as mono.
double depth_from_disparity(const CameraIntrinsics& cam, double u_left,
                            double u_right);

}  // namespace plmap
