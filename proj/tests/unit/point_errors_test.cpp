#include "plmap/point_errors.hpp"

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "test_util.hpp"

namespace plmap {
namespace {

const PyramidNoiseTable kPyramid;
const DepthNoiseModel kNoise;

CameraIntrinsics Camera(double baseline = 0.1) {
  return CameraIntrinsics::Create(100, 100, 320, 240, baseline);
}

bool IsSpd(const Mat3& m) {
  Eigen::LLT<Mat3> llt(m);
  return (m - m.transpose()).norm() == 0.0 && llt.info() == Eigen::Success;
}

TEST(MonoPointResidualTest, ZeroAtExactProjection) {
  const CameraIntrinsics cam = Camera();
  PointObservation obs;
  obs.pixel = project(cam, Vec3(0.3, -0.2, 2.0));
  const auto r = mono_point_residual(obs, Se3Pose::Identity(), cam,
                                     Vec3(0.3, -0.2, 2.0), kPyramid);
  EXPECT_LT(r.residual.norm(), 1e-12);
}

TEST(MonoPointResidualTest, MeasurementMinusPrediction) {
  PointObservation obs;
  obs.pixel = Vec2(321, 240);
  const auto r = mono_point_residual(obs, Se3Pose::Identity(), Camera(),
                                     Vec3(0, 0, 1), kPyramid);
  EXPECT_EQ(r.residual, Vec2(1, 0));
}

TEST(MonoPointResidualTest, CovarianceFollowsPyramidLevel) {
  PointObservation obs;
  obs.pixel = Vec2(320, 240);
  obs.level = 2;
  const auto r = mono_point_residual(obs, Se3Pose::Identity(), Camera(),
                                     Vec3(0, 0, 1), kPyramid);
  EXPECT_LT((r.covariance - 2.0736 * Mat2::Identity()).norm(), 1e-12);
}

TEST(MonoPointResidualTest, BehindCameraThrows) {
  PointObservation obs;
  EXPECT_THROW(mono_point_residual(obs, Se3Pose::Identity(), Camera(),
                                   Vec3(0, 0, -1), kPyramid),
               ProjectionError);
}

TEST(StereoPointResidualTest, PerfectObservation) {
  PointObservation obs;
  obs.pixel = Vec2(320, 240);
  obs.right_u = 315.0;  // cx - b fx / z
  const auto r = stereo_point_residual(obs, Se3Pose::Identity(), Camera(),
                                       Vec3(0, 0, 2), kPyramid);
  EXPECT_LT(r.residual.norm(), 1e-12);
  EXPECT_EQ(r.covariance, Mat3::Identity());
  EXPECT_DOUBLE_EQ(depth_from_disparity(Camera(), 320.0, 315.0), 2.0);
}

TEST(StereoPointResidualTest, ZeroDisparityStillEvaluates) {
  PointObservation obs;
  obs.pixel = Vec2(320, 240);
  obs.right_u = 320.0;
  const auto r = stereo_point_residual(obs, Se3Pose::Identity(), Camera(),
                                       Vec3(0, 0, 2), kPyramid);
  EXPECT_DOUBLE_EQ(r.residual[2], 5.0);
  EXPECT_TRUE(std::isinf(depth_from_disparity(Camera(), 320.0, 320.0)));
}

TEST(StereoPointResidualTest, RequiresRightColumnAndBaseline) {
  PointObservation obs;
  EXPECT_THROW(stereo_point_residual(obs, Se3Pose::Identity(), Camera(),
                                     Vec3(0, 0, 2), kPyramid),
               DomainError);
  obs.right_u = 300.0;
  const CameraIntrinsics mono = CameraIntrinsics::Create(100, 100, 320, 240);
  EXPECT_THROW(stereo_point_residual(obs, Se3Pose::Identity(), mono,
                                     Vec3(0, 0, 2), kPyramid),
               ConfigError);
}

TEST(RgbdPointResidualTest, PropagatedCovarianceClosedForm) {
  const Mat3 s = rgbd_propagated_covariance(1.0, 0.08, 100.0, 2.0, 0.01);
  EXPECT_NEAR(s(2, 2), 1.0004, 1e-15);
  EXPECT_DOUBLE_EQ(s(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(s(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(1, 2), 0.0);
}

TEST(RgbdPointResidualTest, PropagatedCovarianceMatchesNumericPropagation) {
  testing::Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const double sp = rng.Uniform(0.5, 3), b = rng.Uniform(0.03, 0.2);
    const double fx = rng.Uniform(200, 800), depth = rng.Uniform(0.3, 10);
    const double sz = sigma_z(kNoise, depth);
    // Measurement (u, v, u - b fx / depth) as a function of (u, v, depth).
    auto f = [&](const Eigen::VectorXd& m) -> Eigen::VectorXd {
      return Vec3(m[0], m[1], m[0] - b * fx / m[2]);
    };
    const Eigen::MatrixXd j =
        testing::NumericJacobian(f, Vec3(0, 0, depth), 1e-5);
    const Mat3 numeric = j * Vec3(sp * sp, sp * sp, sz * sz).asDiagonal() *
                         j.transpose();
    const Mat3 closed = rgbd_propagated_covariance(sp, b, fx, depth, sz);
    EXPECT_LT(testing::RelativeError(closed, numeric), 1e-8);
  }
}

TEST(RgbdPointResidualTest, ModesAndVirtualBaseline) {
  const CameraIntrinsics cam = Camera(0.08);
  PointObservation obs;
  obs.pixel = Vec2(320, 240);
  obs.depth = 2.0;
  const auto id = rgbd_point_residual(obs, Se3Pose::Identity(), cam,
                                      Vec3(0, 0, 2), kPyramid, kNoise,
                                      PointCovarianceMode::kIdentity);
  EXPECT_LT(id.residual.norm(), 1e-12);
  EXPECT_EQ(id.covariance, Mat3::Identity());
  const auto prop = rgbd_point_residual(obs, Se3Pose::Identity(), cam,
                                        Vec3(0, 0, 2), kPyramid, kNoise,
                                        PointCovarianceMode::kPropagated);
  EXPECT_LT((prop.covariance - rgbd_propagated_covariance(
                                   1.0, 0.08, 100, 2.0, sigma_z(kNoise, 2.0)))
                .norm(),
            1e-15);
  obs.depth.reset();
  EXPECT_THROW(rgbd_point_residual(obs, Se3Pose::Identity(), cam,
                                   Vec3(0, 0, 2), kPyramid, kNoise,
                                   PointCovarianceMode::kIdentity),
               DomainError);
}

TEST(DepthPointResidualTest, Examples) {
  const CameraIntrinsics cam = Camera();
  PointObservation obs;
  obs.pixel = Vec2(320, 240);
  obs.depth = 2.4;
  const auto r = depth_point_residual(obs, Se3Pose::Identity(), cam,
                                      Vec3(0, 0, 2.5), kPyramid, kNoise);
  EXPECT_NEAR(r.residual[2], -0.1, 1e-12);
  EXPECT_LT(r.residual.head<2>().norm(), 1e-12);

  obs.depth = 1.4;
  const auto c = depth_point_residual(obs, Se3Pose::Identity(), cam,
                                      Vec3(0, 0, 1.4), kPyramid, kNoise);
  EXPECT_LT(c.residual.norm(), 1e-12);
  EXPECT_NEAR(c.covariance(2, 2), 9.61e-6, 1e-18);
  EXPECT_EQ(c.covariance(0, 1), 0.0);
}

TEST(PointCovarianceTest, PositiveDefiniteOverDepthRange) {
  for (double depth = 0.3; depth <= 10.0; depth += 0.05) {
    const Mat3 s = rgbd_propagated_covariance(1.0, 0.08, 500.0, depth,
                                              sigma_z(kNoise, depth));
    EXPECT_TRUE(IsSpd(s)) << depth;
    EXPECT_GT(s.determinant(), 0.0);
  }
}

// Residual Jacobians checked against central differences over the left twist
// and world point.
template <int N, typename Residual>
void ExpectJacobiansMatch(const PointJacobians<N>& analytic,
                          const Residual& residual, const Se3Pose& pose,
                          const Vec3& xw) {
  auto f = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return residual(retract_left(pose, v.head<6>()), xw + v.tail<3>());
  };
  Eigen::MatrixXd a(N, 9);
  a << analytic.d_pose, analytic.d_point;
  EXPECT_LT(testing::RelativeError(
                a, testing::NumericJacobian(f, Eigen::VectorXd::Zero(9))),
            1e-5);
}

TEST(PointJacobiansTest, AllVariantsMatchFiniteDifferences) {
  testing::Rng rng(22);
  for (int i = 0; i < 1000; ++i) {
    const CameraIntrinsics cam = CameraIntrinsics::Create(
        rng.Uniform(300, 700), rng.Uniform(300, 700), 320, 240,
        rng.Uniform(0.05, 0.2));
    const Se3Pose pose = rng.Pose();
    const Vec3 xc(rng.Uniform(-2, 2), rng.Uniform(-2, 2), rng.Uniform(0.5, 6));
    const Vec3 xw = pose.inverse() * xc;
    PointObservation obs;
    obs.pixel = project(cam, xc) + Vec2(rng.Gauss(), rng.Gauss());
    obs.depth = xc.z() + 0.01 * rng.Gauss();
    obs.right_u = obs.pixel.x() - 5.0;

    ExpectJacobiansMatch(
        mono_point_jacobians(pose, cam, xw),
        [&](const Se3Pose& p, const Vec3& x) -> Eigen::VectorXd {
          return mono_point_residual(obs, p, cam, x, kPyramid).residual;
        },
        pose, xw);
    ExpectJacobiansMatch(
        stereo_point_jacobians(pose, cam, xw),
        [&](const Se3Pose& p, const Vec3& x) -> Eigen::VectorXd {
          return stereo_point_residual(obs, p, cam, x, kPyramid).residual;
        },
        pose, xw);
    ExpectJacobiansMatch(
        stereo_point_jacobians(pose, cam, xw),
        [&](const Se3Pose& p, const Vec3& x) -> Eigen::VectorXd {
          return rgbd_point_residual(obs, p, cam, x, kPyramid, kNoise,
                                     PointCovarianceMode::kPropagated)
              .residual;
        },
        pose, xw);
    ExpectJacobiansMatch(
        depth_point_jacobians(pose, cam, xw),
        [&](const Se3Pose& p, const Vec3& x) -> Eigen::VectorXd {
          return depth_point_residual(obs, p, cam, x, kPyramid, kNoise)
              .residual;
        },
        pose, xw);
  }
}

}  // namespace
}  // namespace plmap
