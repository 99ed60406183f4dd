#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "plmap/harness.hpp"

namespace plmap {
namespace {

constexpr double kStep = 1e-6;

using Fn = std::function<Eigen::VectorXd(const Se3Pose&, const Vec3&)>;

// Central differences over the left twist and the world point.
Eigen::MatrixXd Numeric(const Fn& f, const Se3Pose& pose, const Vec3& x) {
  const Eigen::VectorXd f0 = f(pose, x);
  Eigen::MatrixXd j(f0.size(), 9);
  for (int k = 0; k < 6; ++k) {
    Vec6 d = Vec6::Zero();
    d[k] = kStep;
    j.col(k) = (f(retract_left(pose, d), x) - f(retract_left(pose, -d), x)) /
               (2.0 * kStep);
  }
  for (int k = 0; k < 3; ++k) {
    Vec3 d = Vec3::Zero();
    d[k] = kStep;
    j.col(6 + k) = (f(pose, x + d) - f(pose, x - d)) / (2.0 * kStep);
  }
  return j;
}

template <int N>
Eigen::MatrixXd Stack(const PointJacobians<N>& j) {
  Eigen::MatrixXd out(N, 9);
  out << j.d_pose, j.d_point;
  return out;
}

Eigen::MatrixXd Stack(const LineErrorJacobians& j) {
  Eigen::MatrixXd out(1, 9);
  out << j.d_pose, j.d_endpoint;
  return out;
}

Eigen::VectorXd Scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

struct Sample {
  CameraIntrinsics cam;
  Se3Pose pose;
  Vec3 point_world;
  LineObservation line;
  BackprojectedSegment segment;
};

Sample Draw(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  Sample s;
  s.cam = CameraIntrinsics::Create(u(300, 700), u(300, 700), u(280, 360),
                                   u(200, 280), u(0.05, 0.2));
  const Vec3 phi(gauss(rng), gauss(rng), gauss(rng));
  const Vec3 t(u(-2, 2), u(-2, 2), u(-2, 2));
  s.pose = Se3Pose::FromTrusted(so3_exp(phi), t);

  auto pixel = [&] { return Vec2(u(20, 620), u(20, 460)); };
  const Vec3 xc = backproject(s.cam, pixel(), u(0.5, 5.0));
  s.point_world = s.pose.inverse() * xc;

  Vec2 p = pixel(), q = pixel();
  while ((q - p).norm() < 30.0) q = pixel();
  s.line.p = p;
  s.line.q = q;
  s.line.depth_p = u(0.5, 5.0);
  s.line.depth_q = u(0.5, 5.0);
  s.segment = backproject_segment(s.line, s.cam);
  return s;
}

}  // namespace

std::vector<JacobianCheckRow> run_jacobian_check(std::uint64_t seed,
                                                 int trials, double tol) {
  std::mt19937_64 rng(seed);
  const PyramidNoiseTable pyramid = PyramidNoiseTable::Create(1.0, 1.2, 8);
  const DepthNoiseModel noise = DepthNoiseModel::Create(0.0012, 0.0019, 0.4);

  struct Check {
    std::string name;
    std::function<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>(const Sample&)> run;
  };
  const std::vector<Check> checks = {
      {"point_mono",
       [&](const Sample& s) {
         PointObservation obs;
         obs.pixel = project(s.cam, s.pose * s.point_world);
         const Fn f = [&](const Se3Pose& p, const Vec3& x) -> Eigen::VectorXd {
           return mono_point_residual(obs, p, s.cam, x, pyramid).residual;
         };
         return std::pair{Stack(mono_point_jacobians(s.pose, s.cam, s.point_world)),
                          Numeric(f, s.pose, s.point_world)};
       }},
      {"point_stereo",
       [&](const Sample& s) {
         PointObservation obs;
         obs.pixel = project(s.cam, s.pose * s.point_world);
         obs.depth = (s.pose * s.point_world).z();
         const Fn f = [&](const Se3Pose& p, const Vec3& x) -> Eigen::VectorXd {
           return rgbd_point_residual(obs, p, s.cam, x, pyramid, noise,
                                      PointCovarianceMode::kIdentity)
               .residual;
         };
         return std::pair{
             Stack(stereo_point_jacobians(s.pose, s.cam, s.point_world)),
             Numeric(f, s.pose, s.point_world)};
       }},
      {"point_depth",
       [&](const Sample& s) {
         PointObservation obs;
         obs.pixel = project(s.cam, s.pose * s.point_world);
         obs.depth = (s.pose * s.point_world).z();
         const Fn f = [&](const Se3Pose& p, const Vec3& x) -> Eigen::VectorXd {
           return depth_point_residual(obs, p, s.cam, x, pyramid, noise)
               .residual;
         };
         return std::pair{
             Stack(depth_point_jacobians(s.pose, s.cam, s.point_world)),
             Numeric(f, s.pose, s.point_world)};
       }},
      {"line_d2d",
       [&](const Sample& s) {
         const Line2dParams l = line_params_from_endpoints(s.line.p, s.line.q);
         const Fn f = [&](const Se3Pose& p, const Vec3& x) {
           return Scalar(d2d(l, p, s.cam, x));
         };
         return std::pair{Stack(d2d_jacobians(l, s.pose, s.cam, s.point_world)),
                          Numeric(f, s.pose, s.point_world)};
       }},
      {"line_d3d",
       [&](const Sample& s) {
         const Fn f = [&](const Se3Pose& p, const Vec3& x) {
           return Scalar(d3d_point_line(p * x, s.segment));
         };
         return std::pair{Stack(d3d_jacobians(s.segment, s.pose, s.point_world)),
                          Numeric(f, s.pose, s.point_world)};
       }},
      {"line_dp",
       [&](const Sample& s) {
         const Fn f = [&](const Se3Pose& p, const Vec3& x) {
           return Scalar(dp_point_backprojection(p * x, s.segment.bp));
         };
         return std::pair{
             Stack(dp_jacobians(s.segment.bp, s.pose, s.point_world)),
             Numeric(f, s.pose, s.point_world)};
       }},
      {"line_db",
       [&](const Sample& s) {
         const double mu = 0.5;
         const Fn f = [&](const Se3Pose& p, const Vec3& x) {
           const Vec3 xc = p * x;
           return Scalar(d3d_point_line(xc, s.segment) +
                         mu * dp_point_backprojection(xc, s.segment.bq));
         };
         return std::pair{Stack(db_jacobians(s.segment, s.pose, s.point_world,
                                             mu, SegmentEndpoint::kQ)),
                          Numeric(f, s.pose, s.point_world)};
       }},
  };

  std::vector<JacobianCheckRow> rows;
  for (const Check& c : checks) rows.push_back({c.name, 0, 0, 0.0});
  for (int t = 0; t < trials; ++t) {
    const Sample s = Draw(rng);
    for (std::size_t k = 0; k < checks.size(); ++k) {
      const auto [analytic, numeric] = checks[k].run(s);
      const double scale = std::max(numeric.norm(), 1e-12);
      const double rel = (analytic - numeric).norm() / scale;
      JacobianCheckRow& row = rows[k];
      ++row.trials;
      if (!(rel <= tol)) ++row.failures;
      row.max_rel_error = std::max(row.max_rel_error, rel);
    }
  }
  return rows;
}

}  // namespace plmap
