#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <Eigen/Geometry>

#include "plmap/harness.hpp"

namespace plmap {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double RotationAngle(const Mat3& r) {
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  // acos loses precision near 0; the sine form does not.
  const double s = 0.5 * vee3(r - r.transpose()).norm();
  return std::atan2(s, c);
}

double Rms(double sum_sq, std::size_t n) {
  return n ? std::sqrt(sum_sq / static_cast<double>(n)) : 0.0;
}

}  // namespace

Se3Pose first_pose_alignment(const SparseMap& estimate,
                             const GroundTruth& truth) {
  if (estimate.keyframes().empty() || truth.poses.empty()) {
    throw DomainError("alignment needs at least one keyframe");
  }
  const auto& [id, kf] = *estimate.keyframes().begin();
  auto it = truth.poses.find(id);
  if (it == truth.poses.end()) {
    throw DomainError("alignment: first keyframe has no ground truth");
  }
  return it->second.inverse() * kf.pose;
}

LineErrorStats line_endpoint_errors(const SparseMap& estimate,
                                    const GroundTruth& truth,
                                    const Se3Pose& alignment) {
  LineErrorStats out;
  double along_sq = 0.0, perp_sq = 0.0, total_sq = 0.0;
  std::size_t n = 0;
  for (const auto& [id, line] : estimate.lines()) {
    auto it = truth.lines.find(id);
    if (it == truth.lines.end()) continue;
    const Vec3 dir = (it->second.q - it->second.p).normalized();
    const Vec3 est[2] = {alignment * line.p, alignment * line.q};
    const Vec3 ref[2] = {it->second.p, it->second.q};
    for (int k = 0; k < 2; ++k) {
      const Vec3 e = est[k] - ref[k];
      const double along = e.dot(dir);
      const double perp = (e - along * dir).norm();
      const double total = e.norm();
      along_sq += along * along;
      perp_sq += perp * perp;
      total_sq += total * total;
      out.max_decomposition_residual =
          std::max(out.max_decomposition_residual,
                   std::abs(along * along + perp * perp - total * total));
      ++n;
    }
  }
  out.along_rms = Rms(along_sq, n);
  out.perp_rms = Rms(perp_sq, n);
  out.total_rms = Rms(total_sq, n);
  return out;
}

double reprojection_rmse(const SparseMap& estimate) {
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (const auto& [kid, kf] : estimate.keyframes()) {
    for (const auto& [pid, obs] : kf.points) {
      try {
        const Vec2 r = obs.pixel -
                       project(kf.camera, kf.pose * estimate.point(pid).position);
        sum_sq += r.squaredNorm();
        n += 2;
      } catch (const ProjectionError&) {
      }
    }
  }
  return Rms(sum_sq, n);
}

bool accepted_costs_monotone(const OptimizationReport& report) {
  double prev = report.initial_cost;
  for (const IterationRow& row : report.rows) {
    if (row.cost > prev) return false;
    prev = row.cost;
  }
  return report.final_cost <= report.initial_cost;
}

void compute_metrics(const SparseMap& estimate, const Scene& scene,
                     ExperimentReport* report) {
  const GroundTruth& truth = scene.truth;
  const Se3Pose s = first_pose_alignment(estimate, truth);
  const Se3Pose s_inv = s.inverse();

  double trans_sq = 0.0, rot_sq = 0.0;
  std::size_t n_poses = 0;
  for (const auto& [id, kf] : estimate.keyframes()) {
    auto it = truth.poses.find(id);
    if (it == truth.poses.end()) continue;
    const Se3Pose aligned = kf.pose * s_inv;
    trans_sq += (aligned.center() - it->second.center()).squaredNorm();
    const double angle = RotationAngle(it->second.rotation() *
                                       aligned.rotation().transpose());
    rot_sq += angle * angle;
    ++n_poses;
  }
  report->pose_trans_rmse = Rms(trans_sq, n_poses);
  report->pose_rot_rmse_deg = Rms(rot_sq, n_poses) * kRadToDeg;

  double point_sq = 0.0;
  std::size_t n_points = 0;
  for (const auto& [id, pt] : estimate.points()) {
    auto it = truth.points.find(id);
    if (it == truth.points.end()) continue;
    point_sq += (s * pt.position - it->second).squaredNorm();
    ++n_points;
  }
  report->point_rmse = Rms(point_sq, n_points);
  report->line = line_endpoint_errors(estimate, truth, s);
  report->reproj_rmse_px = reprojection_rmse(estimate);
}

void write_reports_csv(std::ostream& os,
                       const std::vector<ExperimentReport>& reports) {
  os << "label,seed,pose_trans_rmse,pose_rot_rmse_deg,point_rmse,"
        "line_along_rms,line_perp_rms,line_total_rms,reproj_rmse_px,"
        "initial_cost,final_cost,iterations,converged,monotone\n";
  char buf[512];
  for (const ExperimentReport& r : reports) {
    std::snprintf(buf, sizeof(buf),
                  "%s,%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d,%d\n",
                  r.label.c_str(), static_cast<unsigned long long>(r.seed),
                  r.pose_trans_rmse, r.pose_rot_rmse_deg, r.point_rmse,
                  r.line.along_rms, r.line.perp_rms, r.line.total_rms,
                  r.reproj_rmse_px, r.initial_cost, r.final_cost, r.iterations,
                  r.converged ? 1 : 0, r.monotone ? 1 : 0);
    os << buf;
  }
}

void write_iterations_csv(std::ostream& os, const ExperimentReport& report) {
  os << "label,iteration,cost,candidate_cost,predicted_reduction,lambda,"
        "step_norm,accepted";
  for (int k = 0; k < kNumTermKinds; ++k) {
    os << ",cost_" << term_kind_name(static_cast<TermKind>(k));
  }
  os << "\n";
  char buf[256];
  for (const IterationRow& row : report.optimization.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.12g,%.12g,%.9g,%.3g,%.9g,%d",
                  report.label.c_str(), row.iteration, row.cost,
                  row.candidate_cost, row.predicted_reduction, row.lambda,
                  row.step_norm, row.accepted ? 1 : 0);
    os << buf;
    for (double c : row.cost_by_kind) {
      std::snprintf(buf, sizeof(buf), ",%.12g", c);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace plmap
