#pragma once

// Full and local bundle adjustment over keyframe poses, point landmarks and
// line endpoints, minimized by Levenberg-Marquardt with left-multiplicative
// pose retraction.
//
// Every term contributes rho(r^T W r) to the cost, with W the inverse of its
// measurement covariance frozen at assembly, and rho a robust kernel. The
// normal equations fold the IRLS weight rho'(s) into W.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "plmap/line_geometry.hpp"
#include "plmap/noise.hpp"
#include "plmap/point_errors.hpp"
#include "plmap/sparse_map.hpp"

namespace plmap {

class EmptyProblemError : public Error {
 public:
  using Error::Error;
};

enum class TermKind { kPointMono = 0, kPointStereo = 1, kLine2d = 2, kLine3d = 3 };
inline constexpr int kNumTermKinds = 4;
const char* term_kind_name(TermKind kind);

/// How point observations carrying an RGB-D depth enter the objective.
enum class PointModel {
  kIdentityCov,    // virtual-baseline stereo residual, sigma^2 I
  kPropagatedCov,  // virtual-baseline stereo residual, propagated covariance
  kDepthResidual,  // (u, v, depth) residual
};

enum class DampingMode { kIdentity, kDiagonal };
enum class LinearSolver { kDense, kSchur };

struct BaConfig {
  double mu = 0.5;
  bool use_line_2d = true;
  bool use_line_3d = true;
  int mono_line_min_obs = 3;
  PointModel point_model = PointModel::kPropagatedCov;

  RobustKernel kernel_2dof = RobustKernel::Huber(std::sqrt(kChi2Dof2));
  RobustKernel kernel_3dof = RobustKernel::Huber(std::sqrt(kChi2Dof3));

  PyramidNoiseTable pyramid;
  DepthNoiseModel depth_noise;

  bool fix_first_keyframe = true;
  std::set<KeyframeId> fixed_keyframes;
  bool fix_poses = false;
  bool fix_points = false;
  bool fix_lines = false;

  DampingMode damping = DampingMode::kIdentity;
  LinearSolver solver = LinearSolver::kDense;
  bool refresh_covariances = false;
  // Adds the residual-curvature term sum_i (W r)_i d2 r_i / dX2 of the
  // distance-valued 3D line residuals to the pose, endpoint and cross
  // blocks. Plain Gauss-Newton keeps only the radial curvature of a
  // distance, which makes undamped steps overshoot across the line.
  bool distance_curvature = true;
  int covisibility_threshold = 15;
};

struct BaScope {
  enum class Kind { kFull, kLocal };
  Kind kind = Kind::kFull;
  KeyframeId reference;

  static BaScope Full() { return {}; }
  static BaScope Local(KeyframeId ref) { return {Kind::kLocal, ref}; }
};

enum class PointVariant { kMono, kBinocular, kRgbdVirtual, kDepth };

struct ResidualTerm {
  TermKind kind = TermKind::kPointMono;
  PointVariant variant = PointVariant::kMono;
  KeyframeId keyframe;
  std::uint64_t landmark = 0;  // PointId or LineId value, per kind
  int pose_index = 0;          // into BaState::poses
  int landmark_index = 0;      // into BaState::points or BaState::lines
  int dim = 2;

  PointObservation point_obs;
  LineObservation line_obs;      // descriptor stripped
  Line2dParams line_params;      // kLine2d
  EndpointPairing pairing = EndpointPairing::kDirect;  // kLine3d, frozen
  BackprojectedSegment segment;  // kLine3d, already paired

  Mat3 information = Mat3::Identity();  // top-left dim x dim used
  RobustKernel kernel;
};

struct LinePair {
  Vec3 p = Vec3::Zero();
  Vec3 q = Vec3::Zero();
};

struct BaState {
  std::vector<Se3Pose> poses;
  std::vector<Vec3> points;
  std::vector<LinePair> lines;
};

/// A snapshot of the map entities touched by a scope, their free-parameter
/// layout, and the residual terms. Parameters are ordered: free poses (6,
/// twist phi then rho), free points (3), free lines (6, P then Q), each
/// group in ascending id order.
struct BaProblem {
  BaConfig config;
  std::vector<KeyframeId> keyframe_ids;
  std::vector<CameraIntrinsics> cameras;
  std::vector<PointId> point_ids;
  std::vector<LineId> line_ids;
  std::vector<int> pose_offset;   // -1 when fixed
  std::vector<int> point_offset;
  std::vector<int> line_offset;
  int num_pose_params = 0;
  int num_params = 0;

  std::vector<ResidualTerm> terms;
  BaState state;

  int NumTerms(TermKind kind) const;
};

/// Throws EmptyProblemError when no parameter is free.
BaProblem assemble_problem(const SparseMap& map, const BaScope& scope,
                           const BaConfig& config = {});

/// Re-evaluates every term's information matrix at the current state.
/// Terms whose covariance cannot be evaluated keep their previous value.
void refresh_covariances(BaProblem& problem);

BaState retract(const BaProblem& problem, const BaState& state,
                const Eigen::VectorXd& delta);

struct CostBreakdown {
  double total = 0.0;
  std::array<double, kNumTermKinds> by_kind{};
  bool valid = true;  // false when some term could not be evaluated
};

CostBreakdown evaluate_cost(const BaProblem& problem, const BaState& state);

/// Concatenated raw residuals in term order. Throws on evaluation failure.
Eigen::VectorXd stacked_residual(const BaProblem& problem,
                                 const BaState& state);
/// d stacked_residual / d delta at delta = 0 (rows x num_params).
Eigen::MatrixXd stacked_jacobian(const BaProblem& problem,
                                 const BaState& state);

/// Gauss-Newton system J^T W J, J^T W r with robust weights, in pose /
/// landmark block form.
struct NormalEquations {
  Eigen::MatrixXd hpp;
  struct LandmarkBlock {
    int offset = 0;
    int dim = 0;
    Eigen::MatrixXd hll;
    std::map<int, Eigen::MatrixXd> hpl;  // pose param offset -> 6 x dim
  };
  std::vector<LandmarkBlock> landmarks;
  Eigen::VectorXd g;
  CostBreakdown cost;
};

NormalEquations linearize(const BaProblem& problem, const BaState& state);
Eigen::MatrixXd dense_hessian(const BaProblem& problem,
                              const NormalEquations& ne);

struct LmStep {
  Eigen::VectorXd delta;
  double predicted_reduction = 0.0;
};

/// Solves (H + lambda D) delta = -g at the problem's state. Throws
/// DegenerateError when the damped system is not positive definite.
LmStep lm_step(const BaProblem& problem, double lambda);
LmStep solve_damped(const BaProblem& problem, const NormalEquations& ne,
                    double lambda);

struct LmSchedule {
  int max_iters = 50;
  double cost_rel_tol = 1e-10;
  double cost_abs_tol = 1e-20;
  // Stops once the damped model promises less than this fraction of the
  // cost; robust kernels and distance residuals are only piecewise smooth,
  // so the actual decrease below that level is noise.
  double predicted_rel_tol = 1e-6;
  double lambda0 = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double lambda_max = 1e12;
};

struct IterationRow {
  int iteration = 0;
  double cost = 0.0;            // accepted cost after this iteration
  double candidate_cost = 0.0;  // cost of the tried step (inf if invalid)
  double predicted_reduction = 0.0;
  double lambda = 0.0;          // damping used for the step
  double step_norm = 0.0;
  bool accepted = false;
  std::array<double, kNumTermKinds> cost_by_kind{};
};

struct OptimizationReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string termination;
  std::vector<IterationRow> rows;
};

/// Minimizes in place; problem.state holds the result. Non-convergence is
/// reported, not thrown.
OptimizationReport optimize(BaProblem& problem, const LmSchedule& schedule = {});

/// Copies free values of the problem state into the map.
void write_back(const BaProblem& problem, SparseMap& map);

struct BlockRef {
  enum class Kind { kPose, kPoint, kLine };
  Kind kind;
  std::uint64_t id;
};

/// Ascending eigenvalues of the Gauss-Newton matrix restricted to the
/// selected blocks; fixed blocks are skipped. An empty selection means all
/// free blocks.
std::vector<double> hessian_spectrum(const BaProblem& problem,
                                     const std::vector<BlockRef>& selection);

/// Marginal covariance of every free pose twist, (J^T W J)^-1 blocks.
std::map<KeyframeId, Mat6> marginal_pose_covariances(const BaProblem& problem);

}  // namespace plmap
