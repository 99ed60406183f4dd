#pragma once

// Line segments: 2D line parameters, closed-form two-view depth
// triangulation, the 2D / 3D point-line distances, endpoint association,
// the covariances of those distances, and their analytic Jacobians.

#include <optional>

#include "plmap/camera.hpp"
#include "plmap/descriptor.hpp"
#include "plmap/ids.hpp"
#include "plmap/lie.hpp"
#include "plmap/noise.hpp"

namespace plmap {

inline constexpr double kDefaultMinSegmentLength = 5.0;  // pixels
inline constexpr double kDegenerateEpsilon = 1e-8;
inline constexpr double kSingularV = 1e-9;      // |V| guard for d3d, m^2
inline constexpr double kSingularDelta = 1e-12;  // |X - B| guard for dp, m

/// n^T u - h = 0 with unit normal n; theta = atan2(n_v, n_u).
struct Line2dParams {
  Vec2 normal = Vec2::UnitX();
  double offset = 0.0;
  double theta = 0.0;

  /// (n_u, n_v, -h), so that l^T [u 1] = n^T u - h.
  Vec3 Homogeneous() const { return {normal.x(), normal.y(), -offset}; }
};

/// n = (dv, -du) / |q - p|, h = n^T p. Throws DegenerateError when p == q.
Line2dParams line_params_from_endpoints(const Vec2& p, const Vec2& q);

/// [p 1] x [q 1].
Vec3 homogeneous_line(const Vec2& p, const Vec2& q);

struct LineObservation {
  Vec2 p = Vec2::Zero();
  Vec2 q = Vec2::Zero();
  std::optional<double> depth_p;
  std::optional<double> depth_q;
  int level = 0;
  std::optional<BinaryDescriptor> descriptor;

  /// Both endpoint depths present, finite and positive.
  bool IsStereo() const;
  double Length() const { return (q - p).norm(); }
};

/// Throws DegenerateError when the segment is shorter than min_length.
void validate_line_observation(const LineObservation& obs,
                               double min_length = kDefaultMinSegmentLength);

struct LineLandmark {
  LineId id;
  Vec3 p = Vec3::Zero();
  Vec3 q = Vec3::Zero();
  int n_obs = 0;
};

/// Endpoints cast through the camera at their measured depths, in the camera
/// frame of the observing keyframe.
struct BackprojectedSegment {
  Vec3 bp = Vec3::Zero();
  Vec3 bq = Vec3::Zero();
};

/// Throws DomainError for mono observations.
BackprojectedSegment backproject_segment(const LineObservation& obs,
                                         const CameraIntrinsics& cam);

// ---------------------------------------------------------------------------
// Triangulation

enum class TriangulationFailure {
  kInfiniteSolutions,  // l2 is the epipolar line of x
  kNoSolution,         // vanishing point of x on l2, epipole off l2
  kNonPositiveDepth,
};

class TriangulationError : public DegenerateError {
 public:
  TriangulationError(TriangulationFailure kind, const std::string& what)
      : DegenerateError(what), kind_(kind) {}
  TriangulationFailure kind() const { return kind_; }

 private:
  TriangulationFailure kind_;
};

/// Depth along the ray of pixel x (homogeneous, image 1) at which it meets
/// the plane back-projected from line l2 (homogeneous, image 2):
///   lambda = -l2^T e2 / (l2^T H21 x),  e2 = K2 t21,  H21 = K2 R21 K1^-1.
/// l2 is scaled to a unit normal part and x to a unit last coordinate before
/// the degeneracy tests against eps.
double triangulate_line_depths(const Se3Pose& pose1, const Se3Pose& pose2,
                               const CameraIntrinsics& cam1,
                               const CameraIntrinsics& cam2, const Vec3& line2,
                               const Vec3& x, double eps = kDegenerateEpsilon);

struct RectifiedTriangulation {
  double depth;
  double disparity;
};

/// Ideal rectified rig (R21 = I, t21 = (-b, 0, 0)):
/// depth = b fx l2x / (l2^T x), disparity = l2^T x / l2x.
RectifiedTriangulation triangulate_rectified(double baseline, double fx,
                                             const Vec3& line2, const Vec3& x,
                                             double eps = kDegenerateEpsilon);

struct SegmentDepths {
  double depth_p;
  double depth_q;
};

/// Triangulates both endpoints of segment (p1, q1) in image 1 against the
/// matched segment (p2, q2) in image 2.
SegmentDepths triangulate_segment(const Se3Pose& pose1, const Se3Pose& pose2,
                                  const CameraIntrinsics& cam1,
                                  const CameraIntrinsics& cam2, const Vec2& p1,
                                  const Vec2& q1, const Vec2& p2,
                                  const Vec2& q2,
                                  double eps = kDegenerateEpsilon);

// ---------------------------------------------------------------------------
// Distances

/// Signed n^T pi(X_w) - h.
double d2d(const Line2dParams& line, const Se3Pose& pose,
           const CameraIntrinsics& cam, const Vec3& point_world);

/// |(X - Bp) x (X - Bq)| / |Bp - Bq|. Throws DegenerateError if Bp == Bq.
double d3d_point_line(const Vec3& point_camera, const BackprojectedSegment& seg);

double dp_point_backprojection(const Vec3& point_camera, const Vec3& b);

enum class EndpointPairing { kDirect, kSwapped };

/// Picks the assignment minimizing |P - B| + |Q - B'|; ties go to kDirect.
EndpointPairing associate_endpoints(const BackprojectedSegment& seg,
                                    const Vec3& p_camera, const Vec3& q_camera);

/// The observation with endpoints (and depths) swapped for kSwapped, so that
/// its p always pairs with the landmark's P.
LineObservation paired_observation(const LineObservation& obs,
                                   EndpointPairing pairing);

/// (d3d(P) + mu dp(P, B_P), d3d(Q) + mu dp(Q, B_Q)).
Vec2 backprojection_distance(const LineObservation& obs, const Se3Pose& pose,
                             const CameraIntrinsics& cam,
                             const LineLandmark& landmark, double mu,
                             EndpointPairing pairing);

// ---------------------------------------------------------------------------
// Covariances

/// First-order covariance of (n, h) for endpoints with isotropic noise
/// sigma_li on each coordinate.
struct LineParamCovariance {
  Mat2 sigma_n;
  double sigma_h2;
  Vec2 cov_nh;  // Cov(n, h)
};

LineParamCovariance line_param_covariance(const Vec2& p, const Vec2& q,
                                          double sigma_li);

/// Variance of d2d w.r.t. the four endpoint coordinates:
/// u^T S_n u + s_h^2 - 2 u^T Cov(n, h), with u the projection of X_w.
double sigma_d2d(const LineObservation& obs, const Se3Pose& pose,
                 const CameraIntrinsics& cam, const Vec3& point_world,
                 double sigma_li);

/// Covariance of the backprojection of pixel x at the given depth with
/// noise (sigma_li, sigma_li, sigma_z) on (u, v, depth). In the closed form
/// x and y are the normalized coordinates (u - cx)/fx and (v - cy)/fy.
Mat3 sigma_beta(const Vec2& pixel, double depth, const CameraIntrinsics& cam,
                double sigma_li, double sigma_z);

/// diag(sigma_dB^2(P), sigma_dB^2(Q)). Where |V| is below kSingularV the d3d
/// part is dropped; if every gradient vanishes the paired endpoint's mean
/// axis variance trace(S_beta)/3 is used. Throws DegenerateError when the
/// result is not strictly positive.
Mat2 sigma_dB(const LineObservation& obs, const Se3Pose& pose,
              const CameraIntrinsics& cam, const LineLandmark& landmark,
              double mu, EndpointPairing pairing,
              const PyramidNoiseTable& pyramid, const DepthNoiseModel& noise);

// ---------------------------------------------------------------------------
// Jacobians (twist columns ordered phi, rho)

struct LineErrorJacobians {
  Row6 d_pose = Row6::Zero();
  Row3 d_endpoint = Row3::Zero();  // w.r.t. world endpoint coordinates
};

/// d d3d / d X_c; zero row on the singular locus |V| <= kSingularV.
Row3 d3d_gradient(const Vec3& point_camera, const BackprojectedSegment& seg);
Row3 d3d_gradient_bp(const Vec3& point_camera, const BackprojectedSegment& seg);
Row3 d3d_gradient_bq(const Vec3& point_camera, const BackprojectedSegment& seg);

LineErrorJacobians d2d_jacobians(const Line2dParams& line, const Se3Pose& pose,
                                 const CameraIntrinsics& cam,
                                 const Vec3& point_world);
LineErrorJacobians d3d_jacobians(const BackprojectedSegment& seg,
                                 const Se3Pose& pose, const Vec3& point_world);
/// Throws DegenerateError when |X_c - B| <= kSingularDelta.
LineErrorJacobians dp_jacobians(const Vec3& b, const Se3Pose& pose,
                                const Vec3& point_world);

enum class SegmentEndpoint { kP, kQ };

/// Jacobian of d3d(X) + mu dp(X, B_which) with seg already paired. A vanishing
/// |X_c - B| drops the dp part (the distance sits at its minimum).
LineErrorJacobians db_jacobians(const BackprojectedSegment& seg,
                                const Se3Pose& pose, const Vec3& point_world,
                                double mu, SegmentEndpoint which);

enum class LineTerm { kD2d, kD3d, kDp, kDb };

struct LineJacobianInput {
  Se3Pose pose;
  CameraIntrinsics cam;
  Vec3 point_world = Vec3::Zero();
  Line2dParams line;              // kD2d
  BackprojectedSegment segment;   // kD3d, kDb
  Vec3 backprojected = Vec3::Zero();  // kDp
  double mu = 0.5;                // kDb
  SegmentEndpoint endpoint = SegmentEndpoint::kP;  // kDb
};

LineErrorJacobians line_error_jacobians(LineTerm term,
                                        const LineJacobianInput& in);

}  // namespace plmap
