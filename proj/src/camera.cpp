#include "plmap/camera.hpp"

#include <cmath>
#include <limits>

namespace plmap {

CameraIntrinsics CameraIntrinsics::Create(double fx, double fy, double cx,
                                          double cy,
                                          std::optional<double> baseline) {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw DomainError("CameraIntrinsics: focal lengths must be positive");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw DomainError("CameraIntrinsics: non-finite principal point");
  }
  if (baseline && !(*baseline > 0.0)) {
    throw DomainError("CameraIntrinsics: baseline must be positive");
  }
  return {fx, fy, cx, cy, baseline};
}

Mat3 CameraIntrinsics::K() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 CameraIntrinsics::Kinv() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

double CameraIntrinsics::RequireBaseline() const {
  if (!baseline) throw ConfigError("camera has no baseline configured");
  return *baseline;
}

Vec2 project(const CameraIntrinsics& cam, const Vec3& p, double z_min) {
  if (!(p.z() > z_min)) {
    throw ProjectionError("project: point behind camera or at near plane");
  }
  const double iz = 1.0 / p.z();
  return {cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy};
}

Vec3 backproject(const CameraIntrinsics& cam, const Vec2& pixel,
                 double depth) {
  if (!std::isfinite(depth) || !(depth > 0.0)) {
    throw DomainError("backproject: depth must be positive and finite");
  }
  return {(pixel.x() - cam.cx) / cam.fx * depth,
          (pixel.y() - cam.cy) / cam.fy * depth, depth};
}

Mat23 projection_jacobian(const CameraIntrinsics& cam, const Vec3& p,
                          double z_min) {
  if (!(p.z() > z_min)) {
    throw ProjectionError("projection_jacobian: point at or behind near plane");
  }
  const double iz = 1.0 / p.z();
  const double iz2 = iz * iz;
  Mat23 j;
  j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz2,
       0.0, cam.fy * iz, -cam.fy * p.y() * iz2;
  return j;
}

double depth_from_disparity(const CameraIntrinsics& cam, double u_left,
                            double u_right) {
  const double disparity = u_left - u_right;
  if (disparity == 0.0) return std::numeric_limits<double>::infinity();
  return cam.RequireBaseline() * cam.fx / disparity;
}

}  // namespace plmap
