#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "plmap/harness.hpp"

namespace plmap {
namespace {

constexpr Rgb kWallColors[6] = {{200, 60, 60},  {60, 200, 60},
                                {60, 60, 200},  {200, 200, 60},
                                {60, 200, 200}, {200, 60, 200}};

}  // namespace

Vec3 box_wall_normal(int wall) {
  if (wall < 0 || wall > 5) throw DomainError("wall index must be in 0..5");
  Vec3 n = Vec3::Zero();
  // Wall 2a sits at -half on axis a and faces +a; wall 2a+1 faces -a.
  n[wall / 2] = (wall % 2 == 0) ? 1.0 : -1.0;
  return n;
}

RoomRender render_box_room(const Se3Pose& pose, const CameraIntrinsics& cam,
                           int width, int height, double half_size) {
  if (width <= 0 || height <= 0 || !(half_size > 0.0)) {
    throw DomainError("render: bad image size or room size");
  }
  const Vec3 c = pose.center();
  if ((c.array().abs() >= half_size).any()) {
    throw DomainError("render: camera must be inside the room");
  }
  const Mat3 r_wc = pose.rotation().transpose();
  RoomRender out;
  out.image = DepthImage::Create(width, height);
  out.image.colors.assign(static_cast<std::size_t>(width) * height, Rgb{0, 0, 0});
  out.plane.assign(static_cast<std::size_t>(width) * height, -1);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      // Ray with unit camera z, so the hit parameter is the pixel depth.
      const Vec3 ray_c((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
      const Vec3 ray_w = r_wc * ray_c;
      double best = std::numeric_limits<double>::infinity();
      int wall = -1;
      for (int a = 0; a < 3; ++a) {
        if (ray_w[a] == 0.0) continue;
        const bool positive = ray_w[a] > 0.0;
        const double bound = positive ? half_size : -half_size;
        const double t = (bound - c[a]) / ray_w[a];
        if (t > 0.0 && t < best) {
          best = t;
          wall = 2 * a + (positive ? 1 : 0);
        }
      }
      if (wall < 0) continue;
      const std::size_t i = out.image.Index(u, v);
      out.image.depths[i] = best;
      out.image.colors[i] = kWallColors[wall];
      out.plane[i] = wall;
    }
  }
  return out;
}

NormalCheck check_room_normals(const RoomRender& render, const Se3Pose& pose,
                               const CameraIntrinsics& cam, double tol_deg) {
  const DepthImage& img = render.image;
  const auto normals = estimate_normals(img, cam);
  NormalCheck out;
  for (int v = 1; v + 1 < img.height; ++v) {
    for (int u = 1; u + 1 < img.width; ++u) {
      const std::size_t i = img.Index(u, v);
      const int wall = render.plane[i];
      if (wall < 0) continue;
      if (render.plane[img.Index(u + 1, v)] != wall ||
          render.plane[img.Index(u - 1, v)] != wall ||
          render.plane[img.Index(u, v + 1)] != wall ||
          render.plane[img.Index(u, v - 1)] != wall) {
        continue;
      }
      ++out.interior_pixels;
      if (!normals[i]) continue;
      const Vec3 expected = pose.rotation() * box_wall_normal(wall);
      const double cosang = std::clamp(normals[i]->dot(expected), -1.0, 1.0);
      const double sinang = normals[i]->cross(expected).norm();
      const double deg = std::atan2(sinang, cosang) * 180.0 / std::numbers::pi;
      out.max_angle_deg = std::max(out.max_angle_deg, deg);
      if (deg <= tol_deg) ++out.within_tolerance;
    }
  }
  return out;
}

}  // namespace plmap
