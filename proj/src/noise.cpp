#include "plmap/noise.hpp"

#include <cmath>

namespace plmap {

RobustKernel RobustKernel::Huber(double tau) {
  if (!(tau > 0.0)) throw DomainError("Huber threshold must be positive");
  return {Kind::kHuber, tau};
}

RobustKernel RobustKernel::Cauchy(double tau) {
  if (!(tau > 0.0)) throw DomainError("Cauchy threshold must be positive");
  return {Kind::kCauchy, tau};
}

RobustCost robust_weight(const RobustKernel& kernel, double s) {
  if (s < 0.0) throw DomainError("robust_weight: negative squared norm");
  const double tau2 = kernel.threshold * kernel.threshold;
  switch (kernel.kind) {
    case RobustKernel::Kind::kNone:
      return {s, 1.0};
    case RobustKernel::Kind::kHuber: {
      if (s <= tau2) return {s, 1.0};
      const double r = std::sqrt(s);
      return {2.0 * kernel.threshold * r - tau2, kernel.threshold / r};
    }
    case RobustKernel::Kind::kCauchy: {
      const double q = 1.0 + s / tau2;
      return {tau2 * std::log(q), 1.0 / q};
    }
  }
  return {s, 1.0};
}

DepthNoiseModel DepthNoiseModel::Create(double c0, double c1, double z_ref) {
  if (!(c0 > 0.0) || !(c1 >= 0.0)) {
    throw DomainError("DepthNoiseModel: need c0 > 0 and c1 >= 0");
  }
  return {c0, c1, z_ref};
}

double sigma_z(const DepthNoiseModel& model, double depth) {
  if (!(depth > 0.0)) throw DomainError("sigma_z: depth must be positive");
  const double d = depth - model.z_ref;
  return model.c0 + model.c1 * d * d;
}

PyramidNoiseTable PyramidNoiseTable::Create(double sigma_base,
                                            double scale_factor, int levels) {
  if (!(sigma_base > 0.0) || !(scale_factor > 1.0) || levels < 1) {
    throw DomainError(
        "PyramidNoiseTable: need sigma_base > 0, scale_factor > 1, levels >= 1");
  }
  return {sigma_base, scale_factor, levels};
}

double sigma_pixel(const PyramidNoiseTable& table, int level) {
  if (level < 0 || level >= table.levels) {
    throw DomainError("sigma_pixel: pyramid level out of range");
  }
  return table.sigma_base * std::pow(table.scale_factor, level);
}

}  // namespace plmap
