#include "plmap/ba_solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <optional>

namespace plmap {
namespace {

using RVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using JPose = Eigen::Matrix<double, Eigen::Dynamic, 6, 0, 3, 6>;
using JLand = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 6>;

struct TermEval {
  RVec r;
  JPose jp;
  JLand jl;
};

int LandmarkDim(const ResidualTerm& t) {
  return (t.kind == TermKind::kLine2d || t.kind == TermKind::kLine3d) ? 6 : 3;
}

bool IsLine(const ResidualTerm& t) { return LandmarkDim(t) == 6; }

int LandmarkOffset(const BaProblem& p, const ResidualTerm& t) {
  return IsLine(t) ? p.line_offset[t.landmark_index]
                   : p.point_offset[t.landmark_index];
}

Eigen::MatrixXd Information(const ResidualTerm& t) {
  return t.information.topLeftCorner(t.dim, t.dim);
}

void EvalPoint(const BaProblem& prob, const ResidualTerm& t,
               const Se3Pose& pose, const Vec3& x, bool with_jac,
               TermEval* e) {
  const CameraIntrinsics& cam = prob.cameras[t.pose_index];
  const PyramidNoiseTable& pyr = prob.config.pyramid;
  switch (t.variant) {
    case PointVariant::kMono: {
      e->r = mono_point_residual(t.point_obs, pose, cam, x, pyr).residual;
      if (with_jac) {
        const PointJacobians<2> j = mono_point_jacobians(pose, cam, x);
        e->jp = j.d_pose;
        e->jl = j.d_point;
      }
      return;
    }
    case PointVariant::kBinocular:
    case PointVariant::kRgbdVirtual: {
      e->r = t.variant == PointVariant::kBinocular
                 ? stereo_point_residual(t.point_obs, pose, cam, x, pyr).residual
                 : rgbd_point_residual(t.point_obs, pose, cam, x, pyr,
                                       prob.config.depth_noise,
                                       PointCovarianceMode::kIdentity)
                       .residual;
      if (with_jac) {
        const PointJacobians<3> j = stereo_point_jacobians(pose, cam, x);
        e->jp = j.d_pose;
        e->jl = j.d_point;
      }
      return;
    }
    case PointVariant::kDepth: {
      e->r = depth_point_residual(t.point_obs, pose, cam, x, pyr,
                                  prob.config.depth_noise)
                 .residual;
      if (with_jac) {
        const PointJacobians<3> j = depth_point_jacobians(pose, cam, x);
        e->jp = j.d_pose;
        e->jl = j.d_point;
      }
      return;
    }
  }
}

void EvalLine(const BaProblem& prob, const ResidualTerm& t,
              const Se3Pose& pose, const LinePair& line, bool with_jac,
              TermEval* e) {
  e->r.resize(2);
  if (with_jac) {
    e->jp.resize(2, 6);
    e->jl.setZero(2, 6);
  }
  const double mu = prob.config.mu;
  if (t.kind == TermKind::kLine2d) {
    const CameraIntrinsics& cam = prob.cameras[t.pose_index];
    e->r << d2d(t.line_params, pose, cam, line.p),
        d2d(t.line_params, pose, cam, line.q);
    if (with_jac) {
      const LineErrorJacobians jp = d2d_jacobians(t.line_params, pose, cam, line.p);
      const LineErrorJacobians jq = d2d_jacobians(t.line_params, pose, cam, line.q);
      e->jp.row(0) = jp.d_pose;
      e->jp.row(1) = jq.d_pose;
      e->jl.block<1, 3>(0, 0) = jp.d_endpoint;
      e->jl.block<1, 3>(1, 3) = jq.d_endpoint;
    }
    return;
  }
  const Vec3 pc = pose * line.p;
  const Vec3 qc = pose * line.q;
  e->r << d3d_point_line(pc, t.segment) +
              mu * dp_point_backprojection(pc, t.segment.bp),
      d3d_point_line(qc, t.segment) +
          mu * dp_point_backprojection(qc, t.segment.bq);
  if (with_jac) {
    const LineErrorJacobians jp =
        db_jacobians(t.segment, pose, line.p, mu, SegmentEndpoint::kP);
    const LineErrorJacobians jq =
        db_jacobians(t.segment, pose, line.q, mu, SegmentEndpoint::kQ);
    e->jp.row(0) = jp.d_pose;
    e->jp.row(1) = jq.d_pose;
    e->jl.block<1, 3>(0, 0) = jp.d_endpoint;
    e->jl.block<1, 3>(1, 3) = jq.d_endpoint;
  }
}

// False when the term cannot be evaluated at this state (point behind the
// camera, degenerate geometry).
bool Evaluate(const BaProblem& prob, const ResidualTerm& t,
              const BaState& s, bool with_jac, TermEval* e) {
  try {
    const Se3Pose& pose = s.poses[t.pose_index];
    if (IsLine(t)) {
      EvalLine(prob, t, pose, s.lines[t.landmark_index], with_jac, e);
    } else {
      EvalPoint(prob, t, pose, s.points[t.landmark_index], with_jac, e);
    }
  } catch (const ProjectionError&) {
    return false;
  } catch (const DegenerateError&) {
    return false;
  }
  return e->r.allFinite();
}

std::optional<Mat3> ComputeInformation(const BaProblem& prob,
                                       const ResidualTerm& t,
                                       const BaState& s) {
  const CameraIntrinsics& cam = prob.cameras[t.pose_index];
  const BaConfig& cfg = prob.config;
  const Se3Pose& pose = s.poses[t.pose_index];
  Mat3 info = Mat3::Identity();
  try {
    switch (t.kind) {
      case TermKind::kPointMono:
      case TermKind::kPointStereo: {
        const Vec3& x = s.points[t.landmark_index];
        Mat3 cov = Mat3::Identity();
        switch (t.variant) {
          case PointVariant::kMono:
            cov.topLeftCorner<2, 2>() =
                mono_point_residual(t.point_obs, pose, cam, x, cfg.pyramid)
                    .covariance;
            break;
          case PointVariant::kBinocular:
            cov = stereo_point_residual(t.point_obs, pose, cam, x, cfg.pyramid)
                      .covariance;
            break;
          case PointVariant::kRgbdVirtual:
            cov = rgbd_point_residual(
                      t.point_obs, pose, cam, x, cfg.pyramid, cfg.depth_noise,
                      cfg.point_model == PointModel::kIdentityCov
                          ? PointCovarianceMode::kIdentity
                          : PointCovarianceMode::kPropagated)
                      .covariance;
            break;
          case PointVariant::kDepth:
            cov = depth_point_residual(t.point_obs, pose, cam, x, cfg.pyramid,
                                       cfg.depth_noise)
                      .covariance;
            break;
        }
        info.topLeftCorner(t.dim, t.dim) =
            cov.topLeftCorner(t.dim, t.dim).inverse();
        break;
      }
      case TermKind::kLine2d: {
        const LinePair& l = s.lines[t.landmark_index];
        const double sl = sigma_pixel(cfg.pyramid, t.line_obs.level);
        const double vp = sigma_d2d(t.line_obs, pose, cam, l.p, sl);
        const double vq = sigma_d2d(t.line_obs, pose, cam, l.q, sl);
        if (!(vp > 0.0) || !(vq > 0.0)) return std::nullopt;
        info.topLeftCorner<2, 2>() = Vec2(1.0 / vp, 1.0 / vq).asDiagonal();
        break;
      }
      case TermKind::kLine3d: {
        const LinePair& l = s.lines[t.landmark_index];
        LineLandmark lm;
        lm.p = l.p;
        lm.q = l.q;
        const Mat2 cov = sigma_dB(t.line_obs, pose, cam, lm, cfg.mu, t.pairing,
                                  cfg.pyramid, cfg.depth_noise);
        info.topLeftCorner<2, 2>() =
            Vec2(1.0 / cov(0, 0), 1.0 / cov(1, 1)).asDiagonal();
        break;
      }
    }
  } catch (const ProjectionError&) {
    return std::nullopt;
  } catch (const DegenerateError&) {
    return std::nullopt;
  } catch (const DomainError&) {
    return std::nullopt;
  }
  if (!info.allFinite()) return std::nullopt;
  return info;
}

double Mahalanobis(const ResidualTerm& t, const RVec& r) {
  return r.dot(Information(t) * r);
}

}  // namespace

const char* term_kind_name(TermKind kind) {
  switch (kind) {
    case TermKind::kPointMono:
      return "point_mono";
    case TermKind::kPointStereo:
      return "point_stereo";
    case TermKind::kLine2d:
      return "line_2d";
    case TermKind::kLine3d:
      return "line_3d";
  }
  return "unknown";
}

int BaProblem::NumTerms(TermKind kind) const {
  return static_cast<int>(std::count_if(
      terms.begin(), terms.end(),
      [kind](const ResidualTerm& t) { return t.kind == kind; }));
}

BaProblem assemble_problem(const SparseMap& map, const BaScope& scope,
                           const BaConfig& config) {
  BaProblem prob;
  prob.config = config;
  if (map.keyframes().empty()) throw EmptyProblemError("map has no keyframes");

  std::set<KeyframeId> local;
  if (scope.kind == BaScope::Kind::kLocal) {
    map.keyframe(scope.reference);  // throws on unknown id
    local.insert(scope.reference);
    for (KeyframeId k :
         map.CovisibleKeyframes(scope.reference, config.covisibility_threshold)) {
      local.insert(k);
    }
  } else {
    for (const auto& [id, kf] : map.keyframes()) local.insert(id);
  }

  std::set<PointId> points;
  std::set<LineId> lines;
  for (KeyframeId k : local) {
    const Keyframe& kf = map.keyframe(k);
    for (const auto& [pid, obs] : kf.points) points.insert(pid);
    for (const auto& [lid, obs] : kf.lines) lines.insert(lid);
  }
  std::set<KeyframeId> involved = local;
  for (PointId p : points) {
    for (KeyframeId k : map.PointObservers(p)) involved.insert(k);
  }
  for (LineId l : lines) {
    for (KeyframeId k : map.LineObservers(l)) involved.insert(k);
  }

  const KeyframeId first = map.keyframes().begin()->first;
  int offset = 0;
  std::map<KeyframeId, int> kf_index;
  for (KeyframeId k : involved) {
    const Keyframe& kf = map.keyframe(k);
    kf_index[k] = static_cast<int>(prob.keyframe_ids.size());
    prob.keyframe_ids.push_back(k);
    prob.cameras.push_back(kf.camera);
    prob.state.poses.push_back(kf.pose);
    const bool fixed = config.fix_poses || !local.count(k) ||
                       (config.fix_first_keyframe && k == first) ||
                       config.fixed_keyframes.count(k);
    prob.pose_offset.push_back(fixed ? -1 : offset);
    if (!fixed) offset += 6;
  }
  prob.num_pose_params = offset;

  std::map<PointId, int> point_index;
  for (PointId p : points) {
    point_index[p] = static_cast<int>(prob.point_ids.size());
    prob.point_ids.push_back(p);
    prob.state.points.push_back(map.point(p).position);
    prob.point_offset.push_back(config.fix_points ? -1 : offset);
    if (!config.fix_points) offset += 3;
  }
  std::map<LineId, int> line_index;
  for (LineId l : lines) {
    line_index[l] = static_cast<int>(prob.line_ids.size());
    prob.line_ids.push_back(l);
    const LineLandmark& lm = map.line(l);
    prob.state.lines.push_back({lm.p, lm.q});
    prob.line_offset.push_back(config.fix_lines ? -1 : offset);
    if (!config.fix_lines) offset += 6;
  }
  prob.num_params = offset;
  if (prob.num_params == 0) {
    throw EmptyProblemError("bundle adjustment problem has no free blocks");
  }

  auto add_term = [&](ResidualTerm t) {
    t.kernel = t.dim == 3 ? config.kernel_3dof : config.kernel_2dof;
    TermEval e;
    if (!Evaluate(prob, t, prob.state, false, &e)) return;
    const std::optional<Mat3> info = ComputeInformation(prob, t, prob.state);
    if (!info) return;
    t.information = *info;
    prob.terms.push_back(std::move(t));
  };

  for (KeyframeId k : involved) {
    const Keyframe& kf = map.keyframe(k);
    const int pi = kf_index.at(k);
    for (const auto& [pid, obs] : kf.points) {
      auto it = point_index.find(pid);
      if (it == point_index.end()) continue;
      ResidualTerm t;
      t.keyframe = k;
      t.landmark = pid.value;
      t.pose_index = pi;
      t.landmark_index = it->second;
      t.point_obs = obs;
      if (obs.right_u) {
        t.variant = PointVariant::kBinocular;
      } else if (obs.HasDepth()) {
        t.variant = config.point_model == PointModel::kDepthResidual
                        ? PointVariant::kDepth
                        : PointVariant::kRgbdVirtual;
      } else {
        t.variant = PointVariant::kMono;
      }
      t.dim = t.variant == PointVariant::kMono ? 2 : 3;
      t.kind = t.dim == 2 ? TermKind::kPointMono : TermKind::kPointStereo;
      add_term(std::move(t));
    }
    for (const auto& [lid, obs] : kf.lines) {
      auto it = line_index.find(lid);
      if (it == line_index.end()) continue;
      ResidualTerm base;
      base.keyframe = k;
      base.landmark = lid.value;
      base.pose_index = pi;
      base.landmark_index = it->second;
      base.dim = 2;
      base.line_obs = obs;
      base.line_obs.descriptor.reset();
      const bool stereo = obs.IsStereo();
      const LinePair& l = prob.state.lines[it->second];
      if (config.use_line_2d &&
          (stereo || map.line(lid).n_obs >= config.mono_line_min_obs)) {
        ResidualTerm t = base;
        t.kind = TermKind::kLine2d;
        try {
          t.line_params = line_params_from_endpoints(obs.p, obs.q);
          add_term(std::move(t));
        } catch (const DegenerateError&) {
        }
      }
      if (config.use_line_3d && stereo) {
        ResidualTerm t = base;
        t.kind = TermKind::kLine3d;
        try {
          const BackprojectedSegment raw = backproject_segment(obs, kf.camera);
          t.pairing = associate_endpoints(raw, kf.pose * l.p, kf.pose * l.q);
          t.segment = backproject_segment(paired_observation(obs, t.pairing),
                                          kf.camera);
          add_term(std::move(t));
        } catch (const DomainError&) {
        } catch (const DegenerateError&) {
        }
      }
    }
  }
  return prob;
}

void refresh_covariances(BaProblem& problem) {
  for (ResidualTerm& t : problem.terms) {
    if (auto info = ComputeInformation(problem, t, problem.state)) {
      t.information = *info;
    }
  }
}

BaState retract(const BaProblem& problem, const BaState& state,
                const Eigen::VectorXd& delta) {
  if (delta.size() != problem.num_params) {
    throw DomainError("retract: delta has wrong size");
  }
  BaState out = state;
  for (std::size_t i = 0; i < out.poses.size(); ++i) {
    const int o = problem.pose_offset[i];
    if (o >= 0) out.poses[i] = retract_left(out.poses[i], delta.segment<6>(o));
  }
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    const int o = problem.point_offset[i];
    if (o >= 0) out.points[i] += delta.segment<3>(o);
  }
  for (std::size_t i = 0; i < out.lines.size(); ++i) {
    const int o = problem.line_offset[i];
    if (o >= 0) {
      out.lines[i].p += delta.segment<3>(o);
      out.lines[i].q += delta.segment<3>(o + 3);
    }
  }
  return out;
}

CostBreakdown evaluate_cost(const BaProblem& problem, const BaState& state) {
  CostBreakdown c;
  TermEval e;
  for (const ResidualTerm& t : problem.terms) {
    if (!Evaluate(problem, t, state, false, &e)) {
      c.valid = false;
      c.total = std::numeric_limits<double>::infinity();
      return c;
    }
    const double rho = robust_weight(t.kernel, Mahalanobis(t, e.r)).cost;
    c.total += rho;
    c.by_kind[static_cast<int>(t.kind)] += rho;
  }
  return c;
}

Eigen::VectorXd stacked_residual(const BaProblem& problem,
                                 const BaState& state) {
  int rows = 0;
  for (const ResidualTerm& t : problem.terms) rows += t.dim;
  Eigen::VectorXd r(rows);
  int row = 0;
  TermEval e;
  for (const ResidualTerm& t : problem.terms) {
    if (!Evaluate(problem, t, state, false, &e)) {
      throw ProjectionError("stacked_residual: term cannot be evaluated");
    }
    r.segment(row, t.dim) = e.r;
    row += t.dim;
  }
  return r;
}

Eigen::MatrixXd stacked_jacobian(const BaProblem& problem,
                                 const BaState& state) {
  int rows = 0;
  for (const ResidualTerm& t : problem.terms) rows += t.dim;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(rows, problem.num_params);
  int row = 0;
  TermEval e;
  for (const ResidualTerm& t : problem.terms) {
    if (!Evaluate(problem, t, state, true, &e)) {
      throw ProjectionError("stacked_jacobian: term cannot be evaluated");
    }
    const int po = problem.pose_offset[t.pose_index];
    const int lo = LandmarkOffset(problem, t);
    if (po >= 0) j.block(row, po, t.dim, 6) = e.jp;
    if (lo >= 0) j.block(row, lo, t.dim, LandmarkDim(t)) = e.jl;
    row += t.dim;
  }
  return j;
}

namespace {

// Second derivative (camera frame) of the distance from x to the infinite
// line through a and b, plus mu times that of |x - c|. Both are positive
// semidefinite; singular loci contribute nothing.
Mat3 DistanceCurvature(const Vec3& x, const Vec3& a, const Vec3& b,
                       const Vec3& c, double mu) {
  Mat3 h = Mat3::Zero();
  const Vec3 e = (b - a).normalized();
  const Mat3 perp = Mat3::Identity() - e * e.transpose();
  const Vec3 y = perp * (x - a);
  const double d = y.norm();
  if (d > kSingularDelta) {
    const Vec3 yn = y / d;
    h += (perp - yn * yn.transpose()) / d;
  }
  const Vec3 dx = x - c;
  const double n = dx.norm();
  if (n > kSingularDelta) {
    const Vec3 u = dx / n;
    h += mu * (Mat3::Identity() - u * u.transpose()) / n;
  }
  return h;
}

// Curvature of both endpoint distances in the camera frame, pulled back
// through the first-order point Jacobians into the pose, endpoint and cross
// blocks. The second-order motion of X_c under the twist is left out.
void AddDistanceCurvature(const BaProblem& problem, const BaState& state,
                          const ResidualTerm& t, const Eigen::VectorXd& wr,
                          int po, NormalEquations::LandmarkBlock* lb,
                          NormalEquations* ne) {
  const Se3Pose& pose = state.poses[t.pose_index];
  const LinePair& l = state.lines[t.landmark_index];
  const Vec3 ends[2] = {pose * l.p, pose * l.q};
  const Vec3 backs[2] = {t.segment.bp, t.segment.bq};
  const Mat3& r = pose.rotation();
  for (int i = 0; i < 2; ++i) {
    if (!(wr[i] > 0.0)) continue;
    const Mat3 h = wr[i] * DistanceCurvature(ends[i], t.segment.bp,
                                             t.segment.bq, backs[i],
                                             problem.config.mu);
    const Mat36 m = left_perturbation_point_jacobian(ends[i]);
    if (po >= 0) ne->hpp.block<6, 6>(po, po) += m.transpose() * h * m;
    if (lb) {
      lb->hll.block<3, 3>(3 * i, 3 * i) += r.transpose() * h * r;
      if (po >= 0) {
        auto [it, inserted] = lb->hpl.try_emplace(po);
        if (inserted) it->second = Eigen::MatrixXd::Zero(6, lb->dim);
        it->second.block<6, 3>(0, 3 * i) += m.transpose() * h * r;
      }
    }
  }
}

}  // namespace

NormalEquations linearize(const BaProblem& problem, const BaState& state) {
  NormalEquations ne;
  const int np = problem.num_pose_params;
  ne.hpp = Eigen::MatrixXd::Zero(np, np);
  ne.g = Eigen::VectorXd::Zero(problem.num_params);

  std::vector<int> point_slot(problem.point_ids.size(), -1);
  std::vector<int> line_slot(problem.line_ids.size(), -1);
  for (std::size_t i = 0; i < point_slot.size(); ++i) {
    if (problem.point_offset[i] < 0) continue;
    point_slot[i] = static_cast<int>(ne.landmarks.size());
    ne.landmarks.push_back(
        {problem.point_offset[i], 3, Eigen::MatrixXd::Zero(3, 3), {}});
  }
  for (std::size_t i = 0; i < line_slot.size(); ++i) {
    if (problem.line_offset[i] < 0) continue;
    line_slot[i] = static_cast<int>(ne.landmarks.size());
    ne.landmarks.push_back(
        {problem.line_offset[i], 6, Eigen::MatrixXd::Zero(6, 6), {}});
  }

  TermEval e;
  for (const ResidualTerm& t : problem.terms) {
    if (!Evaluate(problem, t, state, true, &e)) {
      throw ProjectionError("linearize: term cannot be evaluated");
    }
    const Eigen::MatrixXd info = Information(t);
    const RobustCost rc = robust_weight(t.kernel, e.r.dot(info * e.r));
    ne.cost.total += rc.cost;
    ne.cost.by_kind[static_cast<int>(t.kind)] += rc.cost;
    const Eigen::MatrixXd w = rc.irls_weight * info;

    const int po = problem.pose_offset[t.pose_index];
    const int slot = IsLine(t) ? line_slot[t.landmark_index]
                               : point_slot[t.landmark_index];
    if (t.kind == TermKind::kLine3d && problem.config.distance_curvature) {
      AddDistanceCurvature(problem, state, t, w * e.r, po,
                           slot >= 0 ? &ne.landmarks[slot] : nullptr, &ne);
    }
    Eigen::Matrix<double, 6, Eigen::Dynamic> jpt_w;
    if (po >= 0) {
      jpt_w = e.jp.transpose() * w;
      ne.hpp.block<6, 6>(po, po) += jpt_w * e.jp;
      ne.g.segment<6>(po) += jpt_w * e.r;
    }
    if (slot >= 0) {
      NormalEquations::LandmarkBlock& lb = ne.landmarks[slot];
      const Eigen::MatrixXd jlt_w = e.jl.transpose() * w;
      lb.hll += jlt_w * e.jl;
      ne.g.segment(lb.offset, lb.dim) += jlt_w * e.r;
      if (po >= 0) {
        auto [it, inserted] = lb.hpl.try_emplace(po);
        if (inserted) it->second = Eigen::MatrixXd::Zero(6, lb.dim);
        it->second += jpt_w * e.jl;
      }
    }
  }
  return ne;
}

Eigen::MatrixXd dense_hessian(const BaProblem& problem,
                              const NormalEquations& ne) {
  const int n = problem.num_params;
  const int np = problem.num_pose_params;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  h.topLeftCorner(np, np) = ne.hpp;
  for (const auto& lb : ne.landmarks) {
    h.block(lb.offset, lb.offset, lb.dim, lb.dim) = lb.hll;
    for (const auto& [po, w] : lb.hpl) {
      h.block(po, lb.offset, 6, lb.dim) = w;
      h.block(lb.offset, po, lb.dim, 6) = w.transpose();
    }
  }
  return h;
}

namespace {

Eigen::VectorXd DampingDiagonal(const Eigen::VectorXd& diag, DampingMode mode) {
  if (mode == DampingMode::kIdentity) {
    return Eigen::VectorXd::Ones(diag.size());
  }
  return diag.cwiseMax(1e-12);
}

double Quadratic(const NormalEquations& ne, const Eigen::VectorXd& d) {
  const int np = static_cast<int>(ne.hpp.rows());
  double q = d.head(np).dot(ne.hpp * d.head(np));
  for (const auto& lb : ne.landmarks) {
    const auto dl = d.segment(lb.offset, lb.dim);
    q += dl.dot(lb.hll * dl);
    for (const auto& [po, w] : lb.hpl) {
      q += 2.0 * d.segment<6>(po).dot(w * dl);
    }
  }
  return q;
}

// Reduced pose system S dp = b after eliminating every landmark block, with
// the damped landmark inverses kept for back substitution.
struct Reduced {
  Eigen::MatrixXd s;
  Eigen::VectorXd b;
  std::vector<Eigen::MatrixXd> minv;
};

Reduced Eliminate(const NormalEquations& ne, double lambda, DampingMode mode) {
  const int np = static_cast<int>(ne.hpp.rows());
  Reduced red;
  red.s = ne.hpp;
  const Eigen::VectorXd dp = DampingDiagonal(ne.hpp.diagonal(), mode);
  red.s.diagonal() += lambda * dp;
  red.b = -ne.g.head(np);
  red.minv.reserve(ne.landmarks.size());
  for (const auto& lb : ne.landmarks) {
    Eigen::MatrixXd a = lb.hll;
    a.diagonal() += lambda * DampingDiagonal(lb.hll.diagonal(), mode);
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      throw DegenerateError("damped landmark block is not positive definite");
    }
    red.minv.push_back(llt.solve(Eigen::MatrixXd::Identity(lb.dim, lb.dim)));
    const Eigen::MatrixXd& m = red.minv.back();
    const Eigen::VectorXd gl = ne.g.segment(lb.offset, lb.dim);
    for (const auto& [pi, wi] : lb.hpl) {
      const Eigen::MatrixXd wim = wi * m;
      red.b.segment<6>(pi) += wim * gl;
      for (const auto& [pj, wj] : lb.hpl) {
        red.s.block<6, 6>(pi, pj) -= wim * wj.transpose();
      }
    }
  }
  return red;
}

}  // namespace

LmStep solve_damped(const BaProblem& problem, const NormalEquations& ne,
                    double lambda) {
  if (!(lambda > 0.0)) throw DomainError("lm_step: lambda must be positive");
  const int n = problem.num_params;
  const int np = problem.num_pose_params;
  LmStep step;
  step.delta = Eigen::VectorXd::Zero(n);
  if (problem.config.solver == LinearSolver::kDense) {
    Eigen::MatrixXd h = dense_hessian(problem, ne);
    h.diagonal() += lambda * DampingDiagonal(h.diagonal(), problem.config.damping);
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) {
      throw DegenerateError("damped normal equations are not positive definite");
    }
    step.delta = llt.solve(-ne.g);
  } else {
    const Reduced red = Eliminate(ne, lambda, problem.config.damping);
    if (np > 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(red.s);
      if (llt.info() != Eigen::Success) {
        throw DegenerateError("reduced pose system is not positive definite");
      }
      step.delta.head(np) = llt.solve(red.b);
    }
    for (std::size_t l = 0; l < ne.landmarks.size(); ++l) {
      const auto& lb = ne.landmarks[l];
      Eigen::VectorXd rhs = -ne.g.segment(lb.offset, lb.dim);
      for (const auto& [po, w] : lb.hpl) {
        rhs -= w.transpose() * step.delta.segment<6>(po);
      }
      step.delta.segment(lb.offset, lb.dim) = red.minv[l] * rhs;
    }
  }
  if (!step.delta.allFinite()) {
    throw DegenerateError("damped normal equations produced a non-finite step");
  }
  step.predicted_reduction =
      -(2.0 * ne.g.dot(step.delta) + Quadratic(ne, step.delta));
  return step;
}

LmStep lm_step(const BaProblem& problem, double lambda) {
  return solve_damped(problem, linearize(problem, problem.state), lambda);
}

OptimizationReport optimize(BaProblem& problem, const LmSchedule& schedule) {
  OptimizationReport report;
  if (problem.config.refresh_covariances) refresh_covariances(problem);
  NormalEquations ne = linearize(problem, problem.state);
  double cost = ne.cost.total;
  report.initial_cost = cost;
  double lambda = schedule.lambda0;
  report.termination = "maximum iterations reached";

  for (int it = 1; it <= schedule.max_iters; ++it) {
    if (cost <= schedule.cost_abs_tol) {
      report.converged = true;
      report.termination = "cost below absolute tolerance";
      break;
    }
    IterationRow row;
    row.iteration = it;
    row.lambda = lambda;
    report.iterations = it;
    bool accepted = false;
    double rel = 0.0;
    try {
      const LmStep step = solve_damped(problem, ne, lambda);
      row.step_norm = step.delta.norm();
      row.predicted_reduction = step.predicted_reduction;
      if (step.predicted_reduction <= schedule.predicted_rel_tol * cost) {
        row.candidate_cost = cost;
        row.cost = cost;
        row.cost_by_kind = ne.cost.by_kind;
        report.rows.push_back(row);
        report.converged = true;
        report.termination = "predicted decrease below tolerance";
        break;
      }
      BaState candidate = retract(problem, problem.state, step.delta);
      const CostBreakdown cc = evaluate_cost(problem, candidate);
      row.candidate_cost = cc.total;
      if (cc.valid && cc.total < cost) {
        accepted = true;
        rel = (cost - cc.total) / cost;
        problem.state = std::move(candidate);
        if (problem.config.refresh_covariances) refresh_covariances(problem);
        ne = linearize(problem, problem.state);
        cost = ne.cost.total;
      }
    } catch (const DegenerateError&) {
      row.candidate_cost = std::numeric_limits<double>::infinity();
    }
    row.accepted = accepted;
    row.cost = cost;
    row.cost_by_kind = ne.cost.by_kind;
    report.rows.push_back(row);

    if (accepted) {
      lambda = std::max(lambda / schedule.lambda_down, 1e-15);
      if (rel < schedule.cost_rel_tol) {
        report.converged = true;
        report.termination = "relative decrease below tolerance";
        break;
      }
    } else {
      lambda *= schedule.lambda_up;
      if (lambda > schedule.lambda_max) {
        report.converged = true;
        report.termination = "no decrease at maximum damping";
        break;
      }
    }
  }
  report.final_cost = cost;
  return report;
}

void write_back(const BaProblem& problem, SparseMap& map) {
  for (std::size_t i = 0; i < problem.keyframe_ids.size(); ++i) {
    if (problem.pose_offset[i] >= 0) {
      map.SetPose(problem.keyframe_ids[i], problem.state.poses[i]);
    }
  }
  for (std::size_t i = 0; i < problem.point_ids.size(); ++i) {
    if (problem.point_offset[i] >= 0) {
      map.SetPointPosition(problem.point_ids[i], problem.state.points[i]);
    }
  }
  for (std::size_t i = 0; i < problem.line_ids.size(); ++i) {
    if (problem.line_offset[i] >= 0) {
      map.SetLineEndpoints(problem.line_ids[i], problem.state.lines[i].p,
                           problem.state.lines[i].q);
    }
  }
}

std::vector<double> hessian_spectrum(const BaProblem& problem,
                                     const std::vector<BlockRef>& selection) {
  const NormalEquations ne = linearize(problem, problem.state);
  const Eigen::MatrixXd h = dense_hessian(problem, ne);

  std::vector<int> idx;
  auto add = [&](int offset, int dim) {
    if (offset < 0) return;
    for (int k = 0; k < dim; ++k) idx.push_back(offset + k);
  };
  if (selection.empty()) {
    for (int k = 0; k < problem.num_params; ++k) idx.push_back(k);
  }
  for (const BlockRef& b : selection) {
    switch (b.kind) {
      case BlockRef::Kind::kPose:
        for (std::size_t i = 0; i < problem.keyframe_ids.size(); ++i) {
          if (problem.keyframe_ids[i].value == b.id) add(problem.pose_offset[i], 6);
        }
        break;
      case BlockRef::Kind::kPoint:
        for (std::size_t i = 0; i < problem.point_ids.size(); ++i) {
          if (problem.point_ids[i].value == b.id) add(problem.point_offset[i], 3);
        }
        break;
      case BlockRef::Kind::kLine:
        for (std::size_t i = 0; i < problem.line_ids.size(); ++i) {
          if (problem.line_ids[i].value == b.id) add(problem.line_offset[i], 6);
        }
        break;
    }
  }
  if (idx.empty()) return {};
  const int m = static_cast<int>(idx.size());
  Eigen::MatrixXd sub(m, m);
  for (int a = 0; a < m; ++a) {
    for (int c = 0; c < m; ++c) sub(a, c) = h(idx[a], idx[c]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub,
                                                    Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

std::map<KeyframeId, Mat6> marginal_pose_covariances(const BaProblem& problem) {
  const NormalEquations ne = linearize(problem, problem.state);
  std::map<KeyframeId, Mat6> out;
  const int np = problem.num_pose_params;
  if (np == 0) return out;
  // Landmark blocks are inverted exactly: a zero damping leaves S as the
  // Schur complement of the undamped system.
  Reduced red;
  red.s = ne.hpp;
  for (const auto& lb : ne.landmarks) {
    Eigen::LLT<Eigen::MatrixXd> llt(lb.hll);
    if (llt.info() != Eigen::Success) {
      throw DegenerateError("landmark information block is singular");
    }
    const Eigen::MatrixXd m =
        llt.solve(Eigen::MatrixXd::Identity(lb.dim, lb.dim));
    for (const auto& [pi, wi] : lb.hpl) {
      const Eigen::MatrixXd wim = wi * m;
      for (const auto& [pj, wj] : lb.hpl) {
        red.s.block<6, 6>(pi, pj) -= wim * wj.transpose();
      }
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(red.s);
  if (llt.info() != Eigen::Success) {
    throw DegenerateError("reduced pose information is singular");
  }
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(np, np));
  for (std::size_t i = 0; i < problem.keyframe_ids.size(); ++i) {
    const int o = problem.pose_offset[i];
    if (o >= 0) out[problem.keyframe_ids[i]] = cov.block<6, 6>(o, o);
  }
  return out;
}

}  // namespace plmap
