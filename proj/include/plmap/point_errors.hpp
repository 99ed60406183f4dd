#pragma once

// Point reprojection residuals (mono, binocular stereo, RGB-D virtual
// baseline, RGB-D depth) with their covariances and analytic Jacobians.
// Residuals are measurement minus prediction.

#include <optional>

#include "plmap/camera.hpp"
#include "plmap/ids.hpp"
#include "plmap/lie.hpp"
#include "plmap/noise.hpp"

namespace plmap {

struct PointObservation {
  Vec2 pixel = Vec2::Zero();
  std::optional<double> depth;    // RGB-D depth at the pixel
  std::optional<double> right_u;  // binocular right-image column
  int level = 0;

  bool IsMono() const { return !HasDepth() && !right_u; }
  bool HasDepth() const;
};

struct PointLandmark {
  PointId id;
  Vec3 position = Vec3::Zero();
};

enum class PointCovarianceMode { kIdentity, kPropagated };

template <int N>
struct ResidualWithCovariance {
  Eigen::Matrix<double, N, 1> residual;
  Eigen::Matrix<double, N, N> covariance;
};

template <int N>
struct PointJacobians {
  Eigen::Matrix<double, N, 6> d_pose;   // w.r.t. left twist (phi, rho)
  Eigen::Matrix<double, N, 3> d_point;  // w.r.t. world coordinates
};

ResidualWithCovariance<2> mono_point_residual(const PointObservation& obs,
                                              const Se3Pose& pose,
                                              const CameraIntrinsics& cam,
                                              const Vec3& point_world,
                                              const PyramidNoiseTable& pyramid);

/// Requires obs.right_u and a camera baseline.
ResidualWithCovariance<3> stereo_point_residual(
    const PointObservation& obs, const Se3Pose& pose,
    const CameraIntrinsics& cam, const Vec3& point_world,
    const PyramidNoiseTable& pyramid);

/// Stereo residual with the right column synthesized as u - b fx / depth.
ResidualWithCovariance<3> rgbd_point_residual(
    const PointObservation& obs, const Se3Pose& pose,
    const CameraIntrinsics& cam, const Vec3& point_world,
    const PyramidNoiseTable& pyramid, const DepthNoiseModel& noise,
    PointCovarianceMode mode);

/// (p - pi(P), depth - z_c) with diag(s^2, s^2, sigma_z^2(depth)).
ResidualWithCovariance<3> depth_point_residual(
    const PointObservation& obs, const Se3Pose& pose,
    const CameraIntrinsics& cam, const Vec3& point_world,
    const PyramidNoiseTable& pyramid, const DepthNoiseModel& noise);

/// J_S diag(s^2, s^2, sz^2) J_S^T for the virtual-baseline measurement.
Mat3 rgbd_propagated_covariance(double sigma_pixel, double baseline, double fx,
                                double depth, double sigma_depth);

PointJacobians<2> mono_point_jacobians(const Se3Pose& pose,
                                       const CameraIntrinsics& cam,
                                       const Vec3& point_world);
/// Shared by the binocular and virtual-baseline residuals.
PointJacobians<3> stereo_point_jacobians(const Se3Pose& pose,
                                         const CameraIntrinsics& cam,
                                         const Vec3& point_world);
PointJacobians<3> depth_point_jacobians(const Se3Pose& pose,
                                        const CameraIntrinsics& cam,
                                        const Vec3& point_world);

}  // namespace plmap
