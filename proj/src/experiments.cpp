#include <algorithm>
#include <cmath>
#include <limits>

#include "plmap/harness.hpp"

namespace plmap {
namespace {

CameraIntrinsics ScaledCamera(const SceneConfig& c, int* width, int* height) {
  const double s = c.voma_image_scale;
  *width = std::max(3, static_cast<int>(std::lround(c.width * s)));
  *height = std::max(3, static_cast<int>(std::lround(c.height * s)));
  return CameraIntrinsics::Create(c.fx * s, c.fy * s, c.cx * s, c.cy * s);
}

OctreeMap IntegrateWithBatch(const SceneConfig& c,
                             const std::map<KeyframeId, PointCloud>& clouds,
                             const std::map<KeyframeId, Se3Pose>& poses,
                             std::size_t batch, std::size_t* batches,
                             KeyframeArchive* archive) {
  VomaIntegrator integrator(c.voma_resolution,
                            static_cast<std::size_t>(c.voma_queue), batch);
  for (const auto& [id, cloud] : clouds) {
    integrator.Submit({id, poses.at(id), cloud});
  }
  integrator.Finish();
  if (batches) *batches = integrator.batches();
  if (archive) *archive = integrator.archive();
  return integrator.map();
}

}  // namespace

const char* point_model_name(PointModel mode) {
  switch (mode) {
    case PointModel::kIdentityCov:
      return "identity";
    case PointModel::kPropagatedCov:
      return "propagated";
    case PointModel::kDepthResidual:
      return "depth";
  }
  return "?";
}

ExperimentReport run_ba(const Scene& scene, const BaConfig& ba,
                        const LmSchedule& schedule, const std::string& label,
                        SparseMap* result) {
  SparseMap map = scene.map;
  BaProblem problem = assemble_problem(map, BaScope::Full(), ba);
  ExperimentReport report;
  report.label = label;
  report.seed = scene.config.seed;
  report.optimization = optimize(problem, schedule);
  write_back(problem, map);
  report.initial_cost = report.optimization.initial_cost;
  report.final_cost = report.optimization.final_cost;
  report.iterations = report.optimization.iterations;
  report.converged = report.optimization.converged;
  report.monotone = accepted_costs_monotone(report.optimization);
  compute_metrics(map, scene, &report);
  if (result) *result = std::move(map);
  return report;
}

ExperimentReport run_ba_experiment(const SceneConfig& config) {
  const Scene scene = generate_scene(config);
  return run_ba(scene, ba_config_for(config), lm_schedule_for(config), "ba");
}

double cramer_rao_floor(const Scene& scene, const BaConfig& ba) {
  // Observations stay noisy: with noiseless ones every 3D line distance sits
  // at zero, where its gradient vanishes.
  const SparseMap truth = ground_truth_map(scene);
  const BaProblem problem = assemble_problem(truth, BaScope::Full(), ba);
  const std::map<KeyframeId, Mat6> covs = marginal_pose_covariances(problem);
  // The camera center moves by -R^T drho under a left twist, so its
  // covariance trace equals the trace of the rho block. Fixed keyframes add
  // zero, matching the RMSE taken over all keyframes.
  double trace_sum = 0.0;
  for (const auto& [id, cov] : covs) trace_sum += cov.block<3, 3>(3, 3).trace();
  const double n = static_cast<double>(truth.keyframes().size());
  return std::sqrt(trace_sum / n);
}

DriftResult run_drift_experiment(const SceneConfig& config) {
  const Scene scene = generate_scene(config);
  const LmSchedule schedule = lm_schedule_for(config);
  BaConfig ba = ba_config_for(config);
  DriftResult out;
  ba.use_line_3d = false;
  out.line_2d_only = run_ba(scene, ba, schedule, "line_2d_only");
  ba.use_line_3d = true;
  out.full = run_ba(scene, ba, schedule, "full");
  return out;
}

std::vector<AblationRow> run_covariance_ablation(
    const SceneConfig& config, const std::vector<PointModel>& modes) {
  const Scene scene = generate_scene(config);
  const LmSchedule schedule = lm_schedule_for(config);
  std::vector<AblationRow> rows;
  for (PointModel mode : modes) {
    BaConfig ba = ba_config_for(config);
    ba.point_model = mode;
    rows.push_back({mode, run_ba(scene, ba, schedule, point_model_name(mode))});
  }
  return rows;
}

bool VomaReport::Ok(double tol, double min_normal_fraction) const {
  return batch_difference <= tol && zero_change_rebuild_difference <= tol &&
         rebuild_difference <= tol && normals.Fraction() >= min_normal_fraction;
}

VomaReport run_voma_pipeline(const SceneConfig& config) {
  const Scene scene = generate_scene(config);
  int width = 0, height = 0;
  const CameraIntrinsics cam = ScaledCamera(config, &width, &height);

  // Depth images are captured at the true poses; the map integrates them at
  // the current estimates.
  std::map<KeyframeId, PointCloud> clouds;
  VomaReport report;
  for (const auto& [id, pose] : scene.truth.poses) {
    const RoomRender render =
        render_box_room(pose, cam, width, height, config.room_half_size);
    const NormalCheck check = check_room_normals(render, pose, cam, 0.5);
    report.normals.interior_pixels += check.interior_pixels;
    report.normals.within_tolerance += check.within_tolerance;
    report.normals.max_angle_deg =
        std::max(report.normals.max_angle_deg, check.max_angle_deg);
    clouds[id] = keyframe_cloud(render.image, cam);
  }
  std::map<KeyframeId, Se3Pose> initial;
  for (const auto& [id, kf] : scene.map.keyframes()) initial[id] = kf.pose;

  const std::size_t batch = static_cast<std::size_t>(config.voma_batch);
  const std::size_t other = batch == 1 ? 5 : 1;
  KeyframeArchive archive;
  const OctreeMap live =
      IntegrateWithBatch(config, clouds, initial, batch, &report.batches, &archive);
  const OctreeMap reference =
      IntegrateWithBatch(config, clouds, initial, other, nullptr, nullptr);
  report.keyframes = clouds.size();
  report.batch_difference = max_cell_difference(live, reference);

  const OctreeMap same =
      rebuild_on_adjustment(config.voma_resolution, archive, initial);
  report.zero_change_rebuild_difference = max_cell_difference(live, same);

  SparseMap adjusted;
  run_ba(scene, ba_config_for(config), lm_schedule_for(config), "voma_ba",
         &adjusted);
  std::map<KeyframeId, Se3Pose> poses;
  for (const auto& [id, kf] : adjusted.keyframes()) poses[id] = kf.pose;
  const OctreeMap rebuilt =
      rebuild_on_adjustment(config.voma_resolution, archive, poses);
  OctreeMap fresh(config.voma_resolution);
  for (const auto& [id, cloud] : clouds) integrate_cloud(fresh, cloud, poses.at(id));
  report.rebuild_difference = max_cell_difference(rebuilt, fresh);
  report.cells = rebuilt.cell_count();
  report.cloud = extract_global_cloud(rebuilt);
  return report;
}

MatchingRow run_matching_experiment(const SceneConfig& config,
                                    Neighborhood hood) {
  const Scene scene = generate_scene(config);
  // Lines are matched into keyframes after adjustment, as a mapping back-end
  // does; the perturbed initialization is a solver test, not a tracking
  // state.
  SparseMap map;
  run_ba(scene, ba_config_for(config), lm_schedule_for(config), "matching",
         &map);
  MatchingRow row;
  row.bitflip_rate = config.bitflip_rate;
  TileConfig tiles;
  tiles.h_max = std::hypot(config.width, config.height);

  for (const auto& [kid, kf] : map.keyframes()) {
    std::vector<LineObservation> observed;
    std::vector<LineId> owner;
    for (const auto& [lid, obs] : kf.lines) {
      observed.push_back(obs);
      owner.push_back(lid);
    }
    const TileIndex index = build_tile_index(observed, tiles);

    // Map lines predicted inside the frustum, with the same visibility
    // rules the generator applies to true lines.
    auto in_view = [&](const Vec3& xc, Vec2* px) {
      if (xc.z() < config.min_depth || xc.z() > config.max_depth) return false;
      *px = project(kf.camera, xc);
      return px->x() >= 0.0 && px->y() >= 0.0 &&
             px->x() <= config.width - 1.0 && px->y() <= config.height - 1.0;
    };
    for (const auto& [lid, line] : map.lines()) {
      Vec2 pp, qp;
      if (!in_view(kf.pose * line.p, &pp) || !in_view(kf.pose * line.q, &qp)) {
        continue;
      }
      if ((qp - pp).norm() < config.min_segment_px) continue;
      const bool present = kf.lines.count(lid) > 0;
      // Reference descriptor: the line's first observation.
      const KeyframeId first = *map.LineObservers(lid).begin();
      const auto& ref = map.keyframe(first).lines.at(lid).descriptor;
      if (!ref) continue;

      std::vector<MatchCandidate> candidates;
      for (std::size_t i : candidate_matches(
               index, line_params_from_endpoints(pp, qp), hood)) {
        if (!observed[i].descriptor) continue;
        candidates.push_back(
            {i, *observed[i].descriptor, observed[i].p, observed[i].q});
      }
      if (present) ++row.queries;
      const auto match = match_descriptor({*ref, pp, qp}, candidates);
      if (!match) continue;
      ++row.matches;
      if (owner[*match] == lid) ++row.correct;
    }
  }
  return row;
}

}  // namespace plmap
