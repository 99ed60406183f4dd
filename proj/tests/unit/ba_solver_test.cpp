#include "plmap/ba_solver.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "plmap/harness.hpp"
#include "test_util.hpp"

namespace plmap {
namespace {

const CameraIntrinsics kCam = CameraIntrinsics::Create(500, 500, 320, 240, 0.08);

SceneConfig SmallScene(std::uint64_t seed = 3) {
  SceneConfig c;
  c.seed = seed;
  c.keyframes = 6;
  c.points = 80;
  c.lines = 15;
  return c;
}

SceneConfig Noiseless(SceneConfig c) {
  c.pixel_sigma = 0.0;
  c.depth_noise_scale = 0.0;
  c.pose_perturb_m = 0.0;
  c.pose_perturb_deg = 0.0;
  c.landmark_perturb_m = 0.0;
  return c;
}

PointObservation Observe(const Se3Pose& pose, const Vec3& xw) {
  PointObservation obs;
  obs.pixel = project(kCam, pose * xw);
  return obs;
}

LineObservation ObserveLine(const Se3Pose& pose, const Vec3& p, const Vec3& q,
                            bool stereo) {
  LineObservation obs;
  obs.p = project(kCam, pose * p);
  obs.q = project(kCam, pose * q);
  if (stereo) {
    obs.depth_p = (pose * p).z();
    obs.depth_q = (pose * q).z();
  }
  return obs;
}

TEST(AssembleProblemTest, SingleFixedKeyframeIsEmpty) {
  SparseMap map;
  map.AddKeyframe(KeyframeId{0}, Se3Pose(), kCam);
  EXPECT_THROW(assemble_problem(map, BaScope::Full()), EmptyProblemError);
}

TEST(AssembleProblemTest, StereoLineObservationGivesTwoTerms) {
  SparseMap map;
  map.AddKeyframe(KeyframeId{0}, Se3Pose(), kCam);
  const Vec3 p(-0.3, 0.1, 3), q(0.4, -0.2, 3.5);
  map.AddLine({LineId{1}, p, q, 0});
  map.AddLineObservation(KeyframeId{0}, LineId{1},
                         ObserveLine(Se3Pose(), p, q, true));
  const BaProblem prob = assemble_problem(map, BaScope::Full());
  EXPECT_EQ(prob.terms.size(), 2u);
  EXPECT_EQ(prob.NumTerms(TermKind::kLine2d), 1);
  EXPECT_EQ(prob.NumTerms(TermKind::kLine3d), 1);
}

TEST(AssembleProblemTest, MonoLineNeedsThreeObservations) {
  SparseMap map;
  const Vec3 p(-0.3, 0.1, 3), q(0.4, -0.2, 3.5);
  map.AddLine({LineId{1}, p, q, 0});
  for (std::uint64_t k = 0; k < 3; ++k) {
    const Se3Pose pose = se3_exp({Vec3(0, 0.05 * k, 0), Vec3(0.2 * k, 0, 0)});
    map.AddKeyframe(KeyframeId{k}, pose, kCam);
    map.AddLineObservation(KeyframeId{k}, LineId{1},
                           ObserveLine(pose, p, q, false));
    const BaProblem prob = assemble_problem(map, BaScope::Full());
    EXPECT_EQ(prob.NumTerms(TermKind::kLine2d), k >= 2 ? 3 : 0) << k;
    EXPECT_EQ(prob.NumTerms(TermKind::kLine3d), 0);
  }
}

TEST(LmStepTest, ZeroResidualGivesZeroStep) {
  const Scene scene = generate_scene(Noiseless(SmallScene()));
  const BaProblem prob =
      assemble_problem(ground_truth_map(scene), BaScope::Full(),
                       ba_config_for(scene.config));
  const LmStep step = lm_step(prob, 1e-4);
  EXPECT_LT(step.delta.norm(), 1e-9);
}

TEST(LmStepTest, MatchesExplicitDampedSolve) {
  const Scene scene = generate_scene(SmallScene());
  BaConfig cfg = ba_config_for(scene.config);
  cfg.solver = LinearSolver::kDense;
  const BaProblem prob = assemble_problem(scene.map, BaScope::Full(), cfg);
  const NormalEquations ne = linearize(prob, prob.state);
  const Eigen::MatrixXd h = dense_hessian(prob, ne);
  for (double lambda : {1e-2, 1.0, 1e3, 1e8}) {
    const Eigen::MatrixXd damped =
        h + lambda * Eigen::MatrixXd::Identity(h.rows(), h.cols());
    const Eigen::VectorXd expected = -damped.ldlt().solve(ne.g);
    const LmStep step = lm_step(prob, lambda);
    EXPECT_LT((step.delta - expected).norm(), 1e-8 * expected.norm()) << lambda;
  }
  // Gradient-descent limit.
  const double big = 1e12;
  EXPECT_NEAR(lm_step(prob, big).delta.norm(), ne.g.norm() / big,
              1e-3 * ne.g.norm() / big);
}

TEST(LmStepTest, SinglePointWeightedLeastSquares) {
  // Two fixed cameras, one free point, identity kernels.
  SparseMap map;
  const Se3Pose a, b = se3_exp({Vec3(0, 0.1, 0), Vec3(-0.5, 0, 0)});
  map.AddKeyframe(KeyframeId{0}, a, kCam);
  map.AddKeyframe(KeyframeId{1}, b, kCam);
  const Vec3 truth(0.2, -0.1, 3.0), start(0.25, -0.05, 3.2);
  map.AddPoint({PointId{1}, start});
  PointObservation oa = Observe(a, truth), ob = Observe(b, truth);
  ob.level = 2;
  map.AddPointObservation(KeyframeId{0}, PointId{1}, oa);
  map.AddPointObservation(KeyframeId{1}, PointId{1}, ob);
  BaConfig cfg;
  cfg.fix_poses = true;
  cfg.kernel_2dof = cfg.kernel_3dof = RobustKernel::None();
  const BaProblem prob = assemble_problem(map, BaScope::Full(), cfg);

  // Hand-assembled normal equations.
  const double wa = 1.0, wb = 1.0 / std::pow(1.44, 2);
  const auto ja = mono_point_jacobians(a, kCam, start).d_point;
  const auto jb = mono_point_jacobians(b, kCam, start).d_point;
  const Vec2 ra = oa.pixel - project(kCam, a * start);
  const Vec2 rb = ob.pixel - project(kCam, b * start);
  const double lambda = 0.01;
  const Mat3 h = wa * ja.transpose() * ja + wb * jb.transpose() * jb +
                 lambda * Mat3::Identity();
  const Vec3 g = wa * ja.transpose() * ra + wb * jb.transpose() * rb;
  const Vec3 expected = -h.inverse() * g;
  const LmStep step = lm_step(prob, lambda);
  ASSERT_EQ(step.delta.size(), 3);
  EXPECT_LT((step.delta - expected).norm(), 1e-12 * expected.norm());
  const Mat3 hg = h - lambda * Mat3::Identity();
  const double predicted = -(2.0 * g.dot(expected) + expected.dot(hg * expected));
  EXPECT_NEAR(step.predicted_reduction, predicted, 1e-9 * std::abs(predicted));
  EXPECT_GT(predicted, 0.0);
}

TEST(OptimizeTest, GroundTruthIsAFixedPoint) {
  const Scene scene = generate_scene(Noiseless(SmallScene()));
  BaProblem prob = assemble_problem(ground_truth_map(scene), BaScope::Full(),
                                    ba_config_for(scene.config));
  const OptimizationReport r = optimize(prob);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 2);
  EXPECT_LE(r.final_cost, 1e-18);
}

TEST(OptimizeTest, NoiselessPerturbedStartConverges) {
  SceneConfig c = Noiseless(SmallScene());
  c.keyframes = 5;
  c.pose_perturb_m = 0.01;
  c.pose_perturb_deg = 0.5;
  c.landmark_perturb_m = 0.01;
  const Scene scene = generate_scene(c);
  SparseMap out;
  const ExperimentReport r = run_ba(scene, ba_config_for(c), lm_schedule_for(c),
                                    "noiseless", &out);
  EXPECT_TRUE(r.monotone);
  EXPECT_LT(r.reproj_rmse_px, 1e-6);
  EXPECT_LT(r.pose_trans_rmse, 1e-6);
}

TEST(OptimizeTest, PoseRecoveredFromFixedPoints) {
  testing::Rng rng(71);
  SparseMap map;
  const Se3Pose truth = se3_exp({Vec3(0.05, -0.1, 0.02), Vec3(0.1, 0.2, -0.1)});
  map.AddKeyframe(KeyframeId{0},
                  retract_left(truth, (Vec6() << 0.01, -0.01, 0.005, 0.02,
                                       -0.01, 0.03)
                                          .finished()),
                  kCam);
  for (std::uint64_t i = 0; i < 6; ++i) {
    const Vec3 xw = truth.inverse() *
                    backproject(kCam, Vec2(rng.Uniform(50, 590),
                                           rng.Uniform(50, 430)),
                                rng.Uniform(2, 5));
    map.AddPoint({PointId{i}, xw});
    map.AddPointObservation(KeyframeId{0}, PointId{i}, Observe(truth, xw));
  }
  BaConfig cfg;
  cfg.fix_first_keyframe = false;
  cfg.fix_points = true;
  BaProblem prob = assemble_problem(map, BaScope::Full(), cfg);
  const OptimizationReport r = optimize(prob);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((prob.state.poses[0].matrix() - truth.matrix()).cwiseAbs().maxCoeff(),
            1e-8);
}

TEST(OptimizeTest, AcceptedCostsNeverIncrease) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Scene scene = generate_scene(SmallScene(seed));
    BaProblem prob = assemble_problem(scene.map, BaScope::Full(),
                                      ba_config_for(scene.config));
    const OptimizationReport r = optimize(prob);
    double prev = r.initial_cost;
    double lambda = 0.0;
    bool last_rejected = false;
    for (const IterationRow& row : r.rows) {
      EXPECT_LE(row.cost, prev);
      if (last_rejected) EXPECT_GT(row.lambda, lambda);
      last_rejected = !row.accepted;
      lambda = row.lambda;
      prev = row.cost;
    }
    EXPECT_TRUE(r.converged) << r.termination;
  }
}

TEST(OptimizeTest, DeterministicIterates) {
  const Scene scene = generate_scene(SmallScene());
  BaProblem a = assemble_problem(scene.map, BaScope::Full(),
                                 ba_config_for(scene.config));
  BaProblem b = a;
  const OptimizationReport ra = optimize(a), rb = optimize(b);
  ASSERT_EQ(ra.rows.size(), rb.rows.size());
  for (std::size_t i = 0; i < ra.rows.size(); ++i) {
    EXPECT_EQ(ra.rows[i].cost, rb.rows[i].cost);
    EXPECT_EQ(ra.rows[i].step_norm, rb.rows[i].step_norm);
  }
  for (std::size_t i = 0; i < a.state.poses.size(); ++i) {
    EXPECT_EQ(a.state.poses[i].matrix(), b.state.poses[i].matrix());
  }
}

TEST(SolverTest, DenseAndSchurAgree) {
  const Scene scene = generate_scene(SmallScene());
  BaConfig cfg = ba_config_for(scene.config);
  cfg.solver = LinearSolver::kDense;
  const BaProblem dense = assemble_problem(scene.map, BaScope::Full(), cfg);
  cfg.solver = LinearSolver::kSchur;
  const BaProblem schur = assemble_problem(scene.map, BaScope::Full(), cfg);
  for (double lambda : {1e-4, 1.0, 100.0}) {
    const LmStep a = lm_step(dense, lambda), b = lm_step(schur, lambda);
    EXPECT_LT((a.delta - b.delta).norm(), 1e-9 * std::max(1.0, a.delta.norm()));
    EXPECT_NEAR(a.predicted_reduction, b.predicted_reduction,
                1e-9 * std::abs(a.predicted_reduction));
  }
}

TEST(SolverTest, DiagonalDampingOption) {
  const Scene scene = generate_scene(SmallScene());
  BaConfig cfg = ba_config_for(scene.config);
  cfg.damping = DampingMode::kDiagonal;
  cfg.solver = LinearSolver::kDense;
  const BaProblem prob = assemble_problem(scene.map, BaScope::Full(), cfg);
  const NormalEquations ne = linearize(prob, prob.state);
  const Eigen::MatrixXd h = dense_hessian(prob, ne);
  Eigen::MatrixXd damped = h;
  damped.diagonal() += 0.5 * h.diagonal();
  const Eigen::VectorXd expected = -damped.ldlt().solve(ne.g);
  EXPECT_LT((lm_step(prob, 0.5).delta - expected).norm(), 1e-8 * expected.norm());
}

TEST(JacobianTest, StackedJacobianMatchesFiniteDifferences) {
  const Scene scene = generate_scene(SmallScene());
  BaConfig cfg = ba_config_for(scene.config);
  const BaProblem base = assemble_problem(scene.map, BaScope::Full(), cfg);
  testing::Rng rng(72);
  for (int trial = 0; trial < 10; ++trial) {
    // Random linearization point near the initial state.
    Eigen::VectorXd shift(base.num_params);
    for (int i = 0; i < shift.size(); ++i) shift[i] = 1e-3 * rng.Gauss();
    const BaState state = retract(base, base.state, shift);
    auto f = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
      return stacked_residual(base, retract(base, state, d));
    };
    const Eigen::MatrixXd numeric =
        testing::NumericJacobian(f, Eigen::VectorXd::Zero(base.num_params));
    EXPECT_LT(testing::RelativeError(stacked_jacobian(base, state), numeric),
              1e-4);
  }
}

TEST(HessianSpectrumTest, LineBlockGauge) {
  // 2D terms alone leave each endpoint free along the line, checked on
  // noiseless data where all interpretation planes share the line. The 3D
  // terms are distances with no gradient direction at exactly zero, so they
  // are checked with observation noise scaled down by 1000.
  SceneConfig c = SmallScene();
  c.line_mono_fraction = 0.0;
  const Scene clean = generate_scene(Noiseless(c));
  c.pixel_sigma *= 1e-3;
  c.depth_noise_scale *= 1e-3;
  const Scene limit = generate_scene(c);
  BaConfig cfg = ba_config_for(c);
  cfg.fix_poses = true;
  cfg.fix_points = true;
  const SparseMap clean_truth = ground_truth_map(clean);
  const SparseMap limit_truth = ground_truth_map(limit);
  for (const auto& [id, line] : limit_truth.lines()) {
    const std::vector<BlockRef> sel{{BlockRef::Kind::kLine, id.value}};
    cfg.use_line_3d = false;
    const auto only2d =
        hessian_spectrum(assemble_problem(clean_truth, BaScope::Full(), cfg), sel);
    cfg.use_line_3d = true;
    const auto full =
        hessian_spectrum(assemble_problem(limit_truth, BaScope::Full(), cfg), sel);
    ASSERT_EQ(only2d.size(), 6u);
    EXPECT_LE(std::abs(only2d.front()), 1e-8 * only2d.back()) << id.value;
    EXPECT_GT(full.front(), 1e-4 * full.back()) << id.value;
  }
}

TEST(HessianSpectrumTest, FixedBlocksAreExcluded) {
  const Scene scene = generate_scene(SmallScene());
  const BaProblem prob = assemble_problem(scene.map, BaScope::Full(),
                                          ba_config_for(scene.config));
  const std::uint64_t first = scene.map.keyframes().begin()->first.value;
  EXPECT_TRUE(hessian_spectrum(prob, {{BlockRef::Kind::kPose, first}}).empty());
  EXPECT_EQ(hessian_spectrum(prob, {{BlockRef::Kind::kPose, first + 1}}).size(),
            6u);
  EXPECT_EQ(hessian_spectrum(prob, {}).size(),
            static_cast<std::size_t>(prob.num_params));
}

TEST(HessianSpectrumTest, FullProblemIsNonsingularWithDepth) {
  const Scene scene = generate_scene(SmallScene());
  const BaProblem prob = assemble_problem(scene.map, BaScope::Full(),
                                          ba_config_for(scene.config));
  const std::vector<double> ev = hessian_spectrum(prob, {});
  EXPECT_GT(ev.front(), 0.0);
  EXPECT_TRUE(std::isfinite(ev.back() / ev.front()));
}

TEST(LocalBaTest, FreesCovisibleKeyframesOnly) {
  SceneConfig c = SmallScene();
  c.trajectory = Trajectory::kCorridor;
  c.keyframes = 10;
  const Scene scene = generate_scene(c);
  BaConfig cfg = ba_config_for(c);
  const KeyframeId ref{5};
  const BaProblem prob = assemble_problem(scene.map, BaScope::Local(ref), cfg);
  const std::vector<KeyframeId> covisible =
      scene.map.CovisibleKeyframes(ref, cfg.covisibility_threshold);
  for (std::size_t i = 0; i < prob.keyframe_ids.size(); ++i) {
    const KeyframeId k = prob.keyframe_ids[i];
    const bool local = k == ref || std::find(covisible.begin(), covisible.end(),
                                             k) != covisible.end();
    const bool first = k == scene.map.keyframes().begin()->first;
    EXPECT_EQ(prob.pose_offset[i] >= 0, local && !first) << k.value;
  }
  // Every landmark seen by the reference is in the problem.
  for (const auto& [pid, obs] : scene.map.keyframe(ref).points) {
    EXPECT_NE(std::find(prob.point_ids.begin(), prob.point_ids.end(), pid),
              prob.point_ids.end());
  }
  BaProblem mutable_prob = prob;
  const OptimizationReport r = optimize(mutable_prob);
  EXPECT_LE(r.final_cost, r.initial_cost);
}

TEST(CovarianceRefreshTest, FlagChangesOnlyWeights) {
  const Scene scene = generate_scene(SmallScene());
  BaConfig cfg = ba_config_for(scene.config);
  BaProblem frozen = assemble_problem(scene.map, BaScope::Full(), cfg);
  cfg.refresh_covariances = true;
  BaProblem refreshed = assemble_problem(scene.map, BaScope::Full(), cfg);
  const OptimizationReport a = optimize(frozen), b = optimize(refreshed);
  EXPECT_TRUE(a.converged);
  EXPECT_TRUE(b.converged);
  EXPECT_LE(b.final_cost, b.initial_cost);
}

TEST(WriteBackTest, CopiesFreeValues) {
  const Scene scene = generate_scene(SmallScene());
  SparseMap map = scene.map;
  BaProblem prob =
      assemble_problem(map, BaScope::Full(), ba_config_for(scene.config));
  optimize(prob);
  write_back(prob, map);
  for (std::size_t i = 0; i < prob.keyframe_ids.size(); ++i) {
    EXPECT_EQ(map.keyframe(prob.keyframe_ids[i]).pose.matrix(),
              prob.state.poses[i].matrix());
  }
  for (std::size_t i = 0; i < prob.point_ids.size(); ++i) {
    EXPECT_EQ(map.point(prob.point_ids[i]).position, prob.state.points[i]);
  }
  map.CheckInvariants();
}

}  // namespace
}  // namespace plmap
