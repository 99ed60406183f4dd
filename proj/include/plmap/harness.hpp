#pragma once

// Synthetic scenes with known ground truth, experiment drivers and metrics.
// All randomness comes from one std::mt19937_64 seeded by SceneConfig::seed
// and drawn in a fixed order, so every run is reproducible from its config.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "plmap/ba_solver.hpp"
#include "plmap/line_matching.hpp"
#include "plmap/sparse_map.hpp"
#include "plmap/voma.hpp"

namespace plmap {

enum class Trajectory { kOrbit, kCorridor };

struct SceneConfig {
  std::uint64_t seed = 1;
  int keyframes = 20;
  int points = 300;
  int lines = 50;
  Trajectory trajectory = Trajectory::kOrbit;
  double extent = 4.0;        // side of the landmark cube, m
  double orbit_radius = 2.0;  // m; corridor stand-off for kCorridor

  double fx = 500.0, fy = 500.0, cx = 320.0, cy = 240.0;
  int width = 640, height = 480;
  double baseline = 0.08;
  double min_depth = 0.3, max_depth = 8.0;

  // Generation noise.
  double pixel_sigma = 1.0;
  double depth_noise_scale = 1.0;  // multiplier on the depth model sigma
  double depth_c0 = 0.0012, depth_c1 = 0.0019, depth_zref = 0.4;
  double point_mono_fraction = 0.2;
  double line_mono_fraction = 0.2;
  int descriptor_bits = 256;
  double bitflip_rate = 0.0;
  double line_fragment_jitter = 0.0;  // m, endpoint slide along the line
  double line_min_length = 0.5, line_max_length = 1.5;  // m
  double min_segment_px = kDefaultMinSegmentLength;

  // Initialization error (RMS magnitudes).
  double pose_perturb_m = 0.02;
  double pose_perturb_deg = 1.0;
  double landmark_perturb_m = 0.03;

  // Estimator.
  double model_pixel_sigma = 1.0;
  double mu = 0.5;
  RobustKernel::Kind kernel = RobustKernel::Kind::kHuber;
  PointModel point_model = PointModel::kPropagatedCov;
  LinearSolver solver = LinearSolver::kSchur;
  int max_iters = 50;
  double lambda0 = 1e-4;

  // Volumetric map.
  double voma_resolution = 0.05;
  int voma_batch = 1;
  int voma_queue = 4;
  double voma_image_scale = 0.25;
  double room_half_size = 3.0;

  int runs = 1;  // consecutive seeds for multi-seed drivers
};

/// Parses flat "key = value" text; '#' starts a comment. Unknown keys and
/// malformed or out-of-range values throw ConfigError.
SceneConfig parse_scene_config(const std::string& text);
SceneConfig load_scene_config(const std::string& path);
void validate_scene_config(const SceneConfig& config);
/// Documented key list with defaults, one "key = value" per line.
std::string describe_scene_config(const SceneConfig& config);

struct GroundTruth {
  std::map<KeyframeId, Se3Pose> poses;
  std::map<PointId, Vec3> points;
  std::map<LineId, LinePair> lines;
  std::map<LineId, BinaryDescriptor> line_descriptors;
  // Noiseless values behind every rendered observation.
  std::map<std::pair<KeyframeId, PointId>, PointObservation> point_obs;
  std::map<std::pair<KeyframeId, LineId>, LineObservation> line_obs;
  // Observed 3D endpoints (after fragmentation) per line observation.
  std::map<std::pair<KeyframeId, LineId>, LinePair> line_obs_endpoints;
};

struct Scene {
  SceneConfig config;
  CameraIntrinsics camera;
  GroundTruth truth;
  SparseMap map;  // noisy observations, perturbed initial values
};

/// Throws ConfigError for invalid configs and DegenerateError when the
/// requested landmarks cannot be placed with enough observations.
Scene generate_scene(const SceneConfig& config);

BaConfig ba_config_for(const SceneConfig& config);
LmSchedule lm_schedule_for(const SceneConfig& config);

/// Copy of the scene map holding the ground-truth values.
SparseMap ground_truth_map(const Scene& scene);

// ---------------------------------------------------------------------------
// Metrics

struct LineErrorStats {
  double along_rms = 0.0;
  double perp_rms = 0.0;
  double total_rms = 0.0;
  double max_decomposition_residual = 0.0;  // |along^2 + perp^2 - total^2|
};

struct ExperimentReport {
  std::string label;
  std::uint64_t seed = 0;
  double pose_trans_rmse = 0.0;    // m, camera centers after alignment
  double pose_rot_rmse_deg = 0.0;
  double point_rmse = 0.0;         // m
  LineErrorStats line;
  double reproj_rmse_px = 0.0;     // per coordinate, point observations
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  bool monotone = true;            // accepted costs never increase
  OptimizationReport optimization;
};

/// Gauge alignment S = T_true0^-1 T_est0, fixing the first estimated pose on
/// the first true pose; returns S mapping estimated world to true world.
Se3Pose first_pose_alignment(const SparseMap& estimate, const GroundTruth& truth);

/// Fills the error fields of a report from an estimated map.
void compute_metrics(const SparseMap& estimate, const Scene& scene,
                     ExperimentReport* report);

LineErrorStats line_endpoint_errors(const SparseMap& estimate,
                                    const GroundTruth& truth,
                                    const Se3Pose& alignment);

double reprojection_rmse(const SparseMap& estimate);

bool accepted_costs_monotone(const OptimizationReport& report);

// ---------------------------------------------------------------------------
// Experiments

/// Full BA on a generated scene.
ExperimentReport run_ba(const Scene& scene, const BaConfig& ba,
                        const LmSchedule& schedule, const std::string& label,
                        SparseMap* result = nullptr);
ExperimentReport run_ba_experiment(const SceneConfig& config);

/// sqrt(mean over keyframes of the trace of the camera-center covariance)
/// from the Gauss-Newton information at the true values, with fixed
/// keyframes counting as zero.
double cramer_rao_floor(const Scene& scene, const BaConfig& ba);

struct DriftResult {
  ExperimentReport line_2d_only;
  ExperimentReport full;
};

/// Two optimizations from identical initializations, without and with the
/// backprojection terms.
DriftResult run_drift_experiment(const SceneConfig& config);

struct AblationRow {
  PointModel mode;
  ExperimentReport report;
};

std::vector<AblationRow> run_covariance_ablation(
    const SceneConfig& config, const std::vector<PointModel>& modes = {
                                   PointModel::kIdentityCov,
                                   PointModel::kPropagatedCov,
                                   PointModel::kDepthResidual});

const char* point_model_name(PointModel mode);

// Volumetric pipeline on a box room rendered from the scene trajectory.
struct RoomRender {
  DepthImage image;
  std::vector<int> plane;  // per pixel: wall index 0..5, -1 when missing
};

/// Inside of the axis-aligned cube [-half, half]^3 seen from pose.
RoomRender render_box_room(const Se3Pose& pose, const CameraIntrinsics& cam,
                           int width, int height, double half_size);

/// Inward unit normal of wall index 0..5 (-x, +x, -y, +y, -z, +z walls).
Vec3 box_wall_normal(int wall);

struct NormalCheck {
  std::size_t interior_pixels = 0;
  std::size_t within_tolerance = 0;
  double max_angle_deg = 0.0;
  double Fraction() const {
    return interior_pixels ? static_cast<double>(within_tolerance) /
                                 static_cast<double>(interior_pixels)
                           : 0.0;
  }
};

/// Compares estimated normals against the analytic wall normals (rotated
/// into the camera frame) on pixels whose 4-neighborhood lies on one wall.
NormalCheck check_room_normals(const RoomRender& render, const Se3Pose& pose,
                               const CameraIntrinsics& cam, double tol_deg);

struct VomaReport {
  std::size_t keyframes = 0;
  std::size_t cells = 0;
  std::size_t batches = 0;
  double batch_difference = 0.0;         // batch N vs batch 1
  double zero_change_rebuild_difference = 0.0;
  double rebuild_difference = 0.0;       // rebuild vs fresh integration
  NormalCheck normals;
  PointCloud cloud;                      // final global cloud
  bool Ok(double tol = 1e-12, double min_normal_fraction = 0.99) const;
};

VomaReport run_voma_pipeline(const SceneConfig& config);

// Descriptor matching of map lines against keyframe observations. The map
// is first refined by full BA; every map line predicted inside a keyframe's
// frustum is queried against that keyframe's tile index, using the
// descriptor of the line's first observation.
struct MatchingRow {
  double bitflip_rate = 0.0;
  std::size_t queries = 0;
  std::size_t matches = 0;
  std::size_t correct = 0;
  double precision() const {
    return matches ? static_cast<double>(correct) / matches : 1.0;
  }
  double recall() const {
    return queries ? static_cast<double>(correct) / queries : 0.0;
  }
};

MatchingRow run_matching_experiment(const SceneConfig& config,
                                    Neighborhood hood =
                                        Neighborhood::kEightNeighborhood);

// Analytic-vs-numeric Jacobian comparison over random configurations.
struct JacobianCheckRow {
  std::string term;
  int trials = 0;
  int failures = 0;
  double max_rel_error = 0.0;
};

std::vector<JacobianCheckRow> run_jacobian_check(std::uint64_t seed,
                                                 int trials, double tol);

// ---------------------------------------------------------------------------
// CSV output, comma-separated with a header row.

void write_reports_csv(std::ostream& os,
                       const std::vector<ExperimentReport>& reports);
void write_iterations_csv(std::ostream& os, const ExperimentReport& report);

}  // namespace plmap
