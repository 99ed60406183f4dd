#include "plmap/line_geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <utility>

namespace plmap {
namespace {

bool ValidDepth(const std::optional<double>& d) {
  return d && std::isfinite(*d) && *d > 0.0;
}

// d l / d (pu, pv, qu, qv) for l = (qv - pv, pu - qu).
Eigen::Matrix<double, 2, 4> NormalDirectionJacobian() {
  Eigen::Matrix<double, 2, 4> j;
  j << 0.0, -1.0, 0.0, 1.0,
       1.0, 0.0, -1.0, 0.0;
  return j;
}

Vec3 NormalizeLine(const Vec3& l) {
  const double s = l.head<2>().norm();
  if (!(s > 0.0)) throw DomainError("line at infinity has no normal part");
  return l / s;
}

Vec3 NormalizePixel(const Vec3& x) {
  if (x.z() == 0.0) throw DomainError("pixel is a point at infinity");
  return x / x.z();
}

Row3 DpGradient(const Vec3& xc, const Vec3& b) {
  const Vec3 dx = xc - b;
  const double n = dx.norm();
  if (n <= kSingularDelta) return Row3::Zero();
  return dx.transpose() / n;
}

LineErrorJacobians Chain(const Row3& d_camera, const Se3Pose& pose,
                         const Vec3& xc) {
  return {d_camera * left_perturbation_point_jacobian(xc),
          d_camera * pose.rotation()};
}

double SegmentLength(const BackprojectedSegment& seg) {
  const double len = (seg.bp - seg.bq).norm();
  if (!(len > 0.0)) throw DegenerateError("backprojected segment is degenerate");
  return len;
}

}  // namespace

Line2dParams line_params_from_endpoints(const Vec2& p, const Vec2& q) {
  const Vec2 d = q - p;
  const double len = d.norm();
  if (!(len > 0.0)) {
    throw DegenerateError("line_params_from_endpoints: coincident endpoints");
  }
  Line2dParams out;
  out.normal = Vec2(d.y(), -d.x()) / len;
  out.offset = out.normal.dot(p);
  out.theta = std::atan2(out.normal.y(), out.normal.x());
  return out;
}

Vec3 homogeneous_line(const Vec2& p, const Vec2& q) {
  return p.homogeneous().cross(q.homogeneous());
}

bool LineObservation::IsStereo() const {
  return ValidDepth(depth_p) && ValidDepth(depth_q);
}

void validate_line_observation(const LineObservation& obs, double min_length) {
  if (!obs.p.allFinite() || !obs.q.allFinite()) {
    throw DomainError("line observation has non-finite endpoints");
  }
  if (obs.Length() < min_length) {
    throw DegenerateError("line observation shorter than minimum length");
  }
}

BackprojectedSegment backproject_segment(const LineObservation& obs,
                                         const CameraIntrinsics& cam) {
  if (!obs.IsStereo()) {
    throw DomainError("backproject_segment: observation is mono");
  }
  return {backproject(cam, obs.p, *obs.depth_p),
          backproject(cam, obs.q, *obs.depth_q)};
}

double triangulate_line_depths(const Se3Pose& pose1, const Se3Pose& pose2,
                               const CameraIntrinsics& cam1,
                               const CameraIntrinsics& cam2, const Vec3& line2,
                               const Vec3& x, double eps) {
  const Vec3 l = NormalizeLine(line2);
  const Vec3 xh = NormalizePixel(x);
  const Mat3 r21 = pose2.rotation() * pose1.rotation().transpose();
  const Vec3 t21 = pose2.translation() - r21 * pose1.translation();
  const Vec3 e2 = cam2.K() * t21;
  const Mat3 h21 = cam2.K() * r21 * cam1.Kinv();

  const double denom = l.dot(h21 * xh);
  const double numer = -l.dot(e2);
  if (std::abs(denom) <= eps) {
    if (std::abs(numer) <= eps) {
      throw TriangulationError(TriangulationFailure::kInfiniteSolutions,
                               "line triangulation: l2 is an epipolar line");
    }
    throw TriangulationError(TriangulationFailure::kNoSolution,
                             "line triangulation: plane parallel to ray");
  }
  const double lambda = numer / denom;
  if (!(lambda > 0.0)) {
    throw TriangulationError(TriangulationFailure::kNonPositiveDepth,
                             "line triangulation: non-positive depth");
  }
  return lambda;
}

RectifiedTriangulation triangulate_rectified(double baseline, double fx,
                                             const Vec3& line2, const Vec3& x,
                                             double eps) {
  const Vec3 l = NormalizeLine(line2);
  const Vec3 xh = NormalizePixel(x);
  const double lx = l.dot(xh);
  if (std::abs(l.x()) <= eps) {
    // Horizontal l2 is parallel to every epipolar line of the rig.
    if (std::abs(lx) <= eps) {
      throw TriangulationError(TriangulationFailure::kInfiniteSolutions,
                               "rectified triangulation: l2 is epipolar");
    }
    throw TriangulationError(TriangulationFailure::kNoSolution,
                             "rectified triangulation: horizontal l2");
  }
  if (std::abs(lx) <= eps) {
    throw TriangulationError(TriangulationFailure::kNoSolution,
                             "rectified triangulation: lines are parallel");
  }
  const double depth = baseline * fx * l.x() / lx;
  if (!(depth > 0.0)) {
    throw TriangulationError(TriangulationFailure::kNonPositiveDepth,
                             "rectified triangulation: non-positive depth");
  }
  return {depth, lx / l.x()};
}

SegmentDepths triangulate_segment(const Se3Pose& pose1, const Se3Pose& pose2,
                                  const CameraIntrinsics& cam1,
                                  const CameraIntrinsics& cam2, const Vec2& p1,
                                  const Vec2& q1, const Vec2& p2,
                                  const Vec2& q2, double eps) {
  const Vec3 l2 = homogeneous_line(p2, q2);
  return {triangulate_line_depths(pose1, pose2, cam1, cam2, l2,
                                  p1.homogeneous(), eps),
          triangulate_line_depths(pose1, pose2, cam1, cam2, l2,
                                  q1.homogeneous(), eps)};
}

double d2d(const Line2dParams& line, const Se3Pose& pose,
           const CameraIntrinsics& cam, const Vec3& point_world) {
  return line.normal.dot(project(cam, pose * point_world)) - line.offset;
}

double d3d_point_line(const Vec3& xc, const BackprojectedSegment& seg) {
  const double len = SegmentLength(seg);
  return (xc - seg.bp).cross(xc - seg.bq).norm() / len;
}

double dp_point_backprojection(const Vec3& xc, const Vec3& b) {
  return (xc - b).norm();
}

EndpointPairing associate_endpoints(const BackprojectedSegment& seg,
                                    const Vec3& p_camera,
                                    const Vec3& q_camera) {
  const double direct = (p_camera - seg.bp).norm() + (q_camera - seg.bq).norm();
  const double swapped =
      (p_camera - seg.bq).norm() + (q_camera - seg.bp).norm();
  return swapped < direct ? EndpointPairing::kSwapped : EndpointPairing::kDirect;
}

LineObservation paired_observation(const LineObservation& obs,
                                   EndpointPairing pairing) {
  if (pairing == EndpointPairing::kDirect) return obs;
  LineObservation out = obs;
  std::swap(out.p, out.q);
  std::swap(out.depth_p, out.depth_q);
  return out;
}

Vec2 backprojection_distance(const LineObservation& obs, const Se3Pose& pose,
                             const CameraIntrinsics& cam,
                             const LineLandmark& landmark, double mu,
                             EndpointPairing pairing) {
  const BackprojectedSegment seg =
      backproject_segment(paired_observation(obs, pairing), cam);
  const Vec3 pc = pose * landmark.p;
  const Vec3 qc = pose * landmark.q;
  return {d3d_point_line(pc, seg) + mu * dp_point_backprojection(pc, seg.bp),
          d3d_point_line(qc, seg) + mu * dp_point_backprojection(qc, seg.bq)};
}

LineParamCovariance line_param_covariance(const Vec2& p, const Vec2& q,
                                          double sigma_li) {
  const Vec2 l(q.y() - p.y(), p.x() - q.x());
  const double len = l.norm();
  if (!(len > 0.0)) {
    throw DegenerateError("line_param_covariance: coincident endpoints");
  }
  const Vec2 n = l / len;
  const Eigen::Matrix<double, 2, 4> dn =
      (Mat2::Identity() - n * n.transpose()) * NormalDirectionJacobian() / len;
  Eigen::Matrix<double, 1, 4> dh = p.transpose() * dn;
  dh(0) += n.x();
  dh(1) += n.y();

  const double s2 = sigma_li * sigma_li;
  return {s2 * dn * dn.transpose(), s2 * dh.squaredNorm(),
          s2 * dn * dh.transpose()};
}

double sigma_d2d(const LineObservation& obs, const Se3Pose& pose,
                 const CameraIntrinsics& cam, const Vec3& point_world,
                 double sigma_li) {
  const LineParamCovariance c = line_param_covariance(obs.p, obs.q, sigma_li);
  const Vec2 u = project(cam, pose * point_world);
  return u.dot(c.sigma_n * u) + c.sigma_h2 - 2.0 * u.dot(c.cov_nh);
}

Mat3 sigma_beta(const Vec2& pixel, double depth, const CameraIntrinsics& cam,
                double sigma_li, double sigma_z) {
  if (!std::isfinite(depth) || !(depth > 0.0)) {
    throw DomainError("sigma_beta: depth must be positive and finite");
  }
  const double x = (pixel.x() - cam.cx) / cam.fx;
  const double y = (pixel.y() - cam.cy) / cam.fy;
  const double sz2 = sigma_z * sigma_z;
  const double sl2 = sigma_li * sigma_li;
  const double d2 = depth * depth;
  Mat3 s;
  s << sz2 * x * x + d2 * sl2 / (cam.fx * cam.fx), sz2 * x * y, sz2 * x,
       sz2 * x * y, sz2 * y * y + d2 * sl2 / (cam.fy * cam.fy), sz2 * y,
       sz2 * x, sz2 * y, sz2;
  return s;
}

Row3 d3d_gradient(const Vec3& xc, const BackprojectedSegment& seg) {
  const double len = SegmentLength(seg);
  const Vec3 v = (xc - seg.bp).cross(xc - seg.bq);
  const double vn = v.norm();
  if (vn <= kSingularV) return Row3::Zero();
  return -v.transpose() * hat3(seg.bp - seg.bq) / (vn * len);
}

Row3 d3d_gradient_bp(const Vec3& xc, const BackprojectedSegment& seg) {
  const double len = SegmentLength(seg);
  const Vec3 dq = xc - seg.bq;
  const Vec3 v = (xc - seg.bp).cross(dq);
  const double vn = v.norm();
  if (vn <= kSingularV) return Row3::Zero();
  const Vec3 db = seg.bp - seg.bq;
  return v.transpose() * hat3(dq) / (vn * len) -
         vn * db.transpose() / (len * len * len);
}

Row3 d3d_gradient_bq(const Vec3& xc, const BackprojectedSegment& seg) {
  const double len = SegmentLength(seg);
  const Vec3 dp = xc - seg.bp;
  const Vec3 v = dp.cross(xc - seg.bq);
  const double vn = v.norm();
  if (vn <= kSingularV) return Row3::Zero();
  const Vec3 db = seg.bp - seg.bq;
  return -v.transpose() * hat3(dp) / (vn * len) +
         vn * db.transpose() / (len * len * len);
}

Mat2 sigma_dB(const LineObservation& obs, const Se3Pose& pose,
              const CameraIntrinsics& cam, const LineLandmark& landmark,
              double mu, EndpointPairing pairing,
              const PyramidNoiseTable& pyramid, const DepthNoiseModel& noise) {
  const LineObservation paired = paired_observation(obs, pairing);
  const BackprojectedSegment seg = backproject_segment(paired, cam);
  const double sl = sigma_pixel(pyramid, paired.level);
  const Mat3 cov_p = sigma_beta(paired.p, *paired.depth_p, cam, sl,
                                sigma_z(noise, *paired.depth_p));
  const Mat3 cov_q = sigma_beta(paired.q, *paired.depth_q, cam, sl,
                                sigma_z(noise, *paired.depth_q));

  auto endpoint_variance = [&](const Vec3& xc, SegmentEndpoint which) {
    Row3 jp = d3d_gradient_bp(xc, seg);
    Row3 jq = d3d_gradient_bq(xc, seg);
    if (which == SegmentEndpoint::kP) {
      jp += -mu * DpGradient(xc, seg.bp);
    } else {
      jq += -mu * DpGradient(xc, seg.bq);
    }
    if (jp.isZero(0.0) && jq.isZero(0.0)) {
      const Mat3& own = which == SegmentEndpoint::kP ? cov_p : cov_q;
      return own.trace() / 3.0;
    }
    return (jp * cov_p * jp.transpose())(0) + (jq * cov_q * jq.transpose())(0);
  };

  const double vp = endpoint_variance(pose * landmark.p, SegmentEndpoint::kP);
  const double vq = endpoint_variance(pose * landmark.q, SegmentEndpoint::kQ);
  if (!(vp > 0.0) || !(vq > 0.0)) {
    throw DegenerateError("sigma_dB: zero variance (noiseless endpoints)");
  }
  return Vec2(vp, vq).asDiagonal();
}

LineErrorJacobians d2d_jacobians(const Line2dParams& line, const Se3Pose& pose,
                                 const CameraIntrinsics& cam,
                                 const Vec3& point_world) {
  const Vec3 xc = pose * point_world;
  const Row3 j1 = line.normal.transpose() * projection_jacobian(cam, xc);
  return Chain(j1, pose, xc);
}

LineErrorJacobians d3d_jacobians(const BackprojectedSegment& seg,
                                 const Se3Pose& pose, const Vec3& point_world) {
  const Vec3 xc = pose * point_world;
  return Chain(d3d_gradient(xc, seg), pose, xc);
}

LineErrorJacobians dp_jacobians(const Vec3& b, const Se3Pose& pose,
                                const Vec3& point_world) {
  const Vec3 xc = pose * point_world;
  if ((xc - b).norm() <= kSingularDelta) {
    throw DegenerateError("dp_jacobians: point coincides with backprojection");
  }
  return Chain(DpGradient(xc, b), pose, xc);
}

LineErrorJacobians db_jacobians(const BackprojectedSegment& seg,
                                const Se3Pose& pose, const Vec3& point_world,
                                double mu, SegmentEndpoint which) {
  const Vec3 xc = pose * point_world;
  const Vec3& b = which == SegmentEndpoint::kP ? seg.bp : seg.bq;
  const Row3 g = d3d_gradient(xc, seg) + mu * DpGradient(xc, b);
  return Chain(g, pose, xc);
}

LineErrorJacobians line_error_jacobians(LineTerm term,
                                        const LineJacobianInput& in) {
  switch (term) {
    case LineTerm::kD2d:
      return d2d_jacobians(in.line, in.pose, in.cam, in.point_world);
    case LineTerm::kD3d:
      return d3d_jacobians(in.segment, in.pose, in.point_world);
    case LineTerm::kDp:
      return dp_jacobians(in.backprojected, in.pose, in.point_world);
    case LineTerm::kDb:
      return db_jacobians(in.segment, in.pose, in.point_world, in.mu,
                          in.endpoint);
  }
  throw DomainError("line_error_jacobians: unknown term");
}

}  // namespace plmap
