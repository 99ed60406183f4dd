#include "plmap/noise.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace plmap {
namespace {

TEST(RobustWeightTest, HuberQuadraticRegion) {
  const RobustCost c = robust_weight(RobustKernel::Huber(1.0), 0.25);
  EXPECT_DOUBLE_EQ(c.cost, 0.25);
  EXPECT_DOUBLE_EQ(c.irls_weight, 1.0);
}

TEST(RobustWeightTest, HuberLinearRegion) {
  const RobustCost c = robust_weight(RobustKernel::Huber(1.0), 4.0);
  EXPECT_DOUBLE_EQ(c.cost, 3.0);
  EXPECT_DOUBLE_EQ(c.irls_weight, 0.5);
}

TEST(RobustWeightTest, NoneIsIdentity) {
  const RobustCost c = robust_weight(RobustKernel::None(), 7.0);
  EXPECT_DOUBLE_EQ(c.cost, 7.0);
  EXPECT_DOUBLE_EQ(c.irls_weight, 1.0);
}

TEST(RobustWeightTest, CauchyClosedForm) {
  const RobustCost c = robust_weight(RobustKernel::Cauchy(2.0), 4.0);
  EXPECT_NEAR(c.cost, 4.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(c.irls_weight, 0.5, 1e-15);
}

TEST(RobustWeightTest, HuberIsContinuouslyDifferentiableAtThreshold) {
  for (double tau : {0.5, 1.0, std::sqrt(kChi2Dof2), 3.0}) {
    const RobustKernel k = RobustKernel::Huber(tau);
    const double s = tau * tau;
    const RobustCost below = robust_weight(k, s * (1 - 1e-14));
    const RobustCost above = robust_weight(k, s * (1 + 1e-14));
    EXPECT_NEAR(below.cost, above.cost, 1e-12);
    EXPECT_NEAR(below.irls_weight, above.irls_weight, 1e-12);
  }
}

TEST(RobustWeightTest, WeightIsDerivativeAndInUnitInterval) {
  const RobustKernel kernels[] = {RobustKernel::None(), RobustKernel::Huber(1.3),
                                  RobustKernel::Cauchy(0.7)};
  for (const RobustKernel& k : kernels) {
    for (double s = 0.01; s < 100.0; s *= 1.7) {
      const RobustCost c = robust_weight(k, s);
      EXPECT_GT(c.irls_weight, 0.0);
      EXPECT_LE(c.irls_weight, 1.0);
      const double h = 1e-6 * s;
      const double fd =
          (robust_weight(k, s + h).cost - robust_weight(k, s - h).cost) / (2 * h);
      EXPECT_NEAR(fd, c.irls_weight, 1e-6);
    }
  }
  EXPECT_THROW(robust_weight(RobustKernel::None(), -1.0), DomainError);
  EXPECT_THROW(RobustKernel::Huber(0.0), DomainError);
}

TEST(SigmaZTest, DefaultModel) {
  const DepthNoiseModel m;
  EXPECT_DOUBLE_EQ(sigma_z(m, 0.4), 0.0012);
  EXPECT_NEAR(sigma_z(m, 1.4), 0.0031, 1e-15);
  EXPECT_THROW(sigma_z(m, 0.0), DomainError);
}

TEST(SigmaZTest, ConstantWithoutQuadraticTerm) {
  const DepthNoiseModel m = DepthNoiseModel::Create(0.002, 0.0, 0.4);
  for (double d : {0.3, 1.0, 5.0}) EXPECT_DOUBLE_EQ(sigma_z(m, d), 0.002);
}

TEST(SigmaZTest, MinimalAndSymmetricAboutReference) {
  const DepthNoiseModel m;
  for (double off = 0.01; off < 0.39; off += 0.05) {
    EXPECT_NEAR(sigma_z(m, m.z_ref + off), sigma_z(m, m.z_ref - off), 1e-15);
    EXPECT_GT(sigma_z(m, m.z_ref + off), sigma_z(m, m.z_ref));
  }
}

TEST(SigmaPixelTest, PyramidLevels) {
  const PyramidNoiseTable t = PyramidNoiseTable::Create(1.0, 1.2, 8);
  EXPECT_DOUBLE_EQ(sigma_pixel(t, 0), 1.0);
  EXPECT_NEAR(sigma_pixel(t, 2), 1.44, 1e-15);
  EXPECT_THROW(sigma_pixel(t, 8), DomainError);
  EXPECT_THROW(sigma_pixel(t, -1), DomainError);
}

}  // namespace
}  // namespace plmap
