#include "plmap/camera.hpp"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace plmap {
namespace {

const CameraIntrinsics kCam = CameraIntrinsics::Create(100, 100, 320, 240);

TEST(ProjectTest, OpticalAxisHitsPrincipalPoint) {
  EXPECT_EQ(project(kCam, Vec3(0, 0, 1)), Vec2(320, 240));
  EXPECT_EQ(project(kCam, Vec3(0, 0, 7)), Vec2(320, 240));
}

TEST(ProjectTest, DirectEvaluation) {
  EXPECT_LT((project(kCam, Vec3(1, 2, 2)) - Vec2(370, 340)).norm(), 1e-12);
}

TEST(ProjectTest, RejectsPointsAtOrBehindNearPlane) {
  EXPECT_THROW(project(kCam, Vec3(1, 1, 0)), ProjectionError);
  EXPECT_THROW(project(kCam, Vec3(1, 1, -2)), ProjectionError);
  EXPECT_THROW(projection_jacobian(kCam, Vec3(1, 1, 0)), ProjectionError);
}

TEST(BackprojectTest, PrincipalRayAndInvalidDepth) {
  EXPECT_EQ(backproject(kCam, Vec2(320, 240), 2.0), Vec3(0, 0, 2));
  EXPECT_THROW(backproject(kCam, Vec2(1, 1),
                           std::numeric_limits<double>::quiet_NaN()),
               DomainError);
  EXPECT_THROW(backproject(kCam, Vec2(1, 1), 0.0), DomainError);
  EXPECT_THROW(backproject(kCam, Vec2(1, 1), -1.0), DomainError);
}

TEST(BackprojectTest, RoundTripsWithProject) {
  testing::Rng rng(11);
  const CameraIntrinsics cam = CameraIntrinsics::Create(520, 515, 318, 247);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 px(rng.Uniform(0, 640), rng.Uniform(0, 480));
    const double depth = rng.Uniform(0.1, 20);
    EXPECT_LT((project(cam, backproject(cam, px, depth)) - px).norm(), 1e-9);
    const Vec3 x(rng.Uniform(-3, 3), rng.Uniform(-3, 3), rng.Uniform(0.2, 9));
    EXPECT_LT((backproject(cam, project(cam, x), x.z()) - x).norm(), 1e-12);
  }
}

TEST(ProjectionJacobianTest, ClosedFormEntries) {
  Mat23 on_axis;
  on_axis << 100, 0, 0, 0, 100, 0;
  EXPECT_EQ(projection_jacobian(kCam, Vec3(0, 0, 1)), on_axis);
  EXPECT_DOUBLE_EQ(projection_jacobian(kCam, Vec3(1, 0, 2))(0, 2), -25.0);
}

TEST(ProjectionJacobianTest, MatchesFiniteDifferences) {
  testing::Rng rng(12);
  const CameraIntrinsics cam = CameraIntrinsics::Create(480, 510, 300, 250);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x(rng.Uniform(-2, 2), rng.Uniform(-2, 2), rng.Uniform(0.3, 8));
    auto f = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
      return project(cam, p);
    };
    EXPECT_LT(testing::RelativeError(projection_jacobian(cam, x),
                                     testing::NumericJacobian(f, x)),
              1e-5);
  }
}

TEST(CameraIntrinsicsTest, ValidatesParameters) {
  EXPECT_THROW(CameraIntrinsics::Create(0, 1, 0, 0), DomainError);
  EXPECT_THROW(CameraIntrinsics::Create(1, -1, 0, 0), DomainError);
  EXPECT_THROW(CameraIntrinsics::Create(1, 1, 0, 0, 0.0), DomainError);
  EXPECT_THROW(kCam.RequireBaseline(), ConfigError);
  const CameraIntrinsics cam = CameraIntrinsics::Create(100, 90, 5, 6);
  EXPECT_LT((cam.K() * cam.Kinv() - Mat3::Identity()).norm(), 1e-15);
}

TEST(DepthFromDisparityTest, RectifiedRelation) {
  const CameraIntrinsics cam = CameraIntrinsics::Create(100, 100, 0, 0, 0.1);
  EXPECT_DOUBLE_EQ(depth_from_disparity(cam, 15.0, 10.0), 2.0);
  EXPECT_TRUE(std::isinf(depth_from_disparity(cam, 10.0, 10.0)));
}

}  // namespace
}  // namespace plmap
