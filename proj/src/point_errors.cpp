#include "plmap/point_errors.hpp"

#include <cmath>

namespace plmap {
namespace {

double RequireDepth(const PointObservation& obs) {
  if (!obs.HasDepth()) throw DomainError("point observation has no depth");
  return *obs.depth;
}

// Predicted right-image column fx (x - b) / z + cx.
double PredictRight(const CameraIntrinsics& cam, const Vec3& pc, double b) {
  if (!(pc.z() > kDefaultZMin)) {
    throw ProjectionError("stereo prediction: point at or behind near plane");
  }
  return cam.fx * (pc.x() - b) / pc.z() + cam.cx;
}

ResidualWithCovariance<3> StereoLike(const PointObservation& obs,
                                     const Se3Pose& pose,
                                     const CameraIntrinsics& cam,
                                     const Vec3& point_world, double right_u,
                                     double sigma) {
  const double b = cam.RequireBaseline();
  const Vec3 pc = pose * point_world;
  const Vec2 uv = project(cam, pc);
  ResidualWithCovariance<3> out;
  out.residual << obs.pixel - uv, right_u - PredictRight(cam, pc, b);
  out.covariance = sigma * sigma * Mat3::Identity();
  return out;
}

}  // namespace

bool PointObservation::HasDepth() const {
  return depth && std::isfinite(*depth) && *depth > 0.0;
}

ResidualWithCovariance<2> mono_point_residual(const PointObservation& obs,
                                              const Se3Pose& pose,
                                              const CameraIntrinsics& cam,
                                              const Vec3& point_world,
                                              const PyramidNoiseTable& pyramid) {
  const double s = sigma_pixel(pyramid, obs.level);
  return {obs.pixel - project(cam, pose * point_world),
          s * s * Mat2::Identity()};
}

ResidualWithCovariance<3> stereo_point_residual(
    const PointObservation& obs, const Se3Pose& pose,
    const CameraIntrinsics& cam, const Vec3& point_world,
    const PyramidNoiseTable& pyramid) {
  if (!obs.right_u) throw DomainError("stereo residual needs right_u");
  return StereoLike(obs, pose, cam, point_world, *obs.right_u,
                    sigma_pixel(pyramid, obs.level));
}

ResidualWithCovariance<3> rgbd_point_residual(
    const PointObservation& obs, const Se3Pose& pose,
    const CameraIntrinsics& cam, const Vec3& point_world,
    const PyramidNoiseTable& pyramid, const DepthNoiseModel& noise,
    PointCovarianceMode mode) {
  const double depth = RequireDepth(obs);
  const double b = cam.RequireBaseline();
  const double s = sigma_pixel(pyramid, obs.level);
  const double virtual_right = obs.pixel.x() - b * cam.fx / depth;
  auto out = StereoLike(obs, pose, cam, point_world, virtual_right, s);
  if (mode == PointCovarianceMode::kPropagated) {
    out.covariance =
        rgbd_propagated_covariance(s, b, cam.fx, depth, sigma_z(noise, depth));
  }
  return out;
}

ResidualWithCovariance<3> depth_point_residual(
    const PointObservation& obs, const Se3Pose& pose,
    const CameraIntrinsics& cam, const Vec3& point_world,
    const PyramidNoiseTable& pyramid, const DepthNoiseModel& noise) {
  const double depth = RequireDepth(obs);
  const double s = sigma_pixel(pyramid, obs.level);
  const double sz = sigma_z(noise, depth);
  const Vec3 pc = pose * point_world;
  ResidualWithCovariance<3> out;
  out.residual << obs.pixel - project(cam, pc), depth - pc.z();
  out.covariance = Vec3(s * s, s * s, sz * sz).asDiagonal();
  return out;
}

Mat3 rgbd_propagated_covariance(double sigma_pixel, double baseline, double fx,
                                double depth, double sigma_depth) {
  const double s2 = sigma_pixel * sigma_pixel;
  const double k = baseline * fx / (depth * depth);
  Mat3 c;
  c << s2, 0.0, s2,
       0.0, s2, 0.0,
       s2, 0.0, s2 + k * k * sigma_depth * sigma_depth;
  return c;
}

PointJacobians<2> mono_point_jacobians(const Se3Pose& pose,
                                       const CameraIntrinsics& cam,
                                       const Vec3& point_world) {
  const Vec3 pc = pose * point_world;
  const Mat23 jc = projection_jacobian(cam, pc);
  return {-jc * left_perturbation_point_jacobian(pc), -jc * pose.rotation()};
}

PointJacobians<3> stereo_point_jacobians(const Se3Pose& pose,
                                         const CameraIntrinsics& cam,
                                         const Vec3& point_world) {
  const double b = cam.RequireBaseline();
  const Vec3 pc = pose * point_world;
  Mat3 jp;
  jp.topRows<2>() = projection_jacobian(cam, pc);
  const double iz = 1.0 / pc.z();
  jp.row(2) << cam.fx * iz, 0.0, -cam.fx * (pc.x() - b) * iz * iz;
  return {-jp * left_perturbation_point_jacobian(pc), -jp * pose.rotation()};
}

PointJacobians<3> depth_point_jacobians(const Se3Pose& pose,
                                        const CameraIntrinsics& cam,
                                        const Vec3& point_world) {
  const Vec3 pc = pose * point_world;
  Mat3 jp;
  jp.topRows<2>() = projection_jacobian(cam, pc);
  jp.row(2) << 0.0, 0.0, 1.0;
  return {-jp * left_perturbation_point_jacobian(pc), -jp * pose.rotation()};
}

}  // namespace plmap
