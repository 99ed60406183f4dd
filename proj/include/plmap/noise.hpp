#pragma once

// Robust kernels and the sensor noise models behind every covariance.

#include "plmap/types.hpp"

namespace plmap {

/// 95% chi-square quantiles used as default kernel thresholds (squared).
inline constexpr double kChi2Dof1 = 3.841;
inline constexpr double kChi2Dof2 = 5.991;
inline constexpr double kChi2Dof3 = 7.815;

struct RobustKernel {
  enum class Kind { kNone, kHuber, kCauchy };
  Kind kind = Kind::kNone;
  double threshold = 1.0;  // tau, in whitened residual units

  static RobustKernel None() { return {Kind::kNone, 1.0}; }
  static RobustKernel Huber(double tau);
  static RobustKernel Cauchy(double tau);
};

struct RobustCost {
  double cost;
  double irls_weight;  // d rho / d s
};

/// Evaluates rho(s) on the squared Mahalanobis norm s.
RobustCost robust_weight(const RobustKernel& kernel, double squared_mahalanobis);

/// Axial depth noise sigma_z(d) = c0 + c1 (d - z_ref)^2.
struct DepthNoiseModel {
  double c0 = 0.0012;
  double c1 = 0.0019;
  double z_ref = 0.4;

  static DepthNoiseModel Create(double c0, double c1, double z_ref);
};

double sigma_z(const DepthNoiseModel& model, double depth);

/// Per-level detection noise sigma_base * scale_factor^level.
struct PyramidNoiseTable {
  double sigma_base = 1.0;
  double scale_factor = 1.2;
  int levels = 8;

  static PyramidNoiseTable Create(double sigma_base, double scale_factor,
                                  int levels);
};

double sigma_pixel(const PyramidNoiseTable& table, int level);

}  // namespace plmap
