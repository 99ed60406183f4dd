#include <cmath>
#include <numbers>
#include <optional>
#include <set>

#include "plmap/harness.hpp"

namespace plmap {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Camera looking from center toward target, x right, y down, z forward.
Se3Pose LookAt(const Vec3& center, const Vec3& target) {
  const Vec3 f = (target - center).normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(f.dot(up)) > 0.99) up = Vec3::UnitY();
  const Vec3 x = f.cross(up).normalized();
  const Vec3 y = f.cross(x);
  Mat3 r_wc;
  r_wc << x, y, f;
  const Mat3 r_cw = r_wc.transpose();
  return Se3Pose::FromTrusted(r_cw, -r_cw * center);
}

Vec3 Gaussian3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng), y = n(rng), z = n(rng);
  return sigma * Vec3(x, y, z);
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Visible {
  Vec2 pixel;
  double depth;
};

std::optional<Visible> See(const Se3Pose& pose, const CameraIntrinsics& cam,
                           const SceneConfig& c, const Vec3& xw) {
  const Vec3 xc = pose * xw;
  if (xc.z() < c.min_depth || xc.z() > c.max_depth) return std::nullopt;
  const Vec2 u = project(cam, xc);
  if (u.x() < 0.0 || u.y() < 0.0 || u.x() > c.width - 1.0 ||
      u.y() > c.height - 1.0) {
    return std::nullopt;
  }
  return Visible{u, xc.z()};
}

std::vector<Se3Pose> MakeTrajectory(const SceneConfig& c, std::mt19937_64& rng) {
  std::vector<Se3Pose> poses;
  const int k = c.keyframes;
  for (int i = 0; i < k; ++i) {
    Vec3 center;
    Vec3 target;
    if (c.trajectory == Trajectory::kOrbit) {
      const double a = 2.0 * std::numbers::pi * i / k;
      center = Vec3(c.orbit_radius * std::cos(a), c.orbit_radius * std::sin(a),
                    0.2 * std::sin(2.0 * a));
      target = Vec3::Zero();
    } else {
      const double s = k > 1 ? static_cast<double>(i) / (k - 1) - 0.5 : 0.0;
      center = Vec3(s * c.extent, -c.orbit_radius - 0.5 * c.extent, 0.0);
      target = Vec3(s * c.extent, 0.0, 0.0);
    }
    target += Gaussian3(rng, 0.1);
    poses.push_back(LookAt(center, target));
  }
  return poses;
}

BinaryDescriptor RandomDescriptor(std::mt19937_64& rng, int bits) {
  BinaryDescriptor d(bits);
  std::bernoulli_distribution coin(0.5);
  for (int b = 0; b < bits; ++b) d.set_bit(b, coin(rng));
  return d;
}

BinaryDescriptor Flip(BinaryDescriptor d, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution flip(rate);
  for (int b = 0; b < d.bits(); ++b) {
    if (flip(rng)) d.flip(b);
  }
  return d;
}

}  // namespace

BaConfig ba_config_for(const SceneConfig& c) {
  BaConfig ba;
  ba.mu = c.mu;
  ba.point_model = c.point_model;
  ba.solver = c.solver;
  ba.pyramid = PyramidNoiseTable::Create(c.model_pixel_sigma, 1.2, 8);
  ba.depth_noise = DepthNoiseModel::Create(c.depth_c0, c.depth_c1, c.depth_zref);
  switch (c.kernel) {
    case RobustKernel::Kind::kNone:
      ba.kernel_2dof = ba.kernel_3dof = RobustKernel::None();
      break;
    case RobustKernel::Kind::kHuber:
      ba.kernel_2dof = RobustKernel::Huber(std::sqrt(kChi2Dof2));
      ba.kernel_3dof = RobustKernel::Huber(std::sqrt(kChi2Dof3));
      break;
    case RobustKernel::Kind::kCauchy:
      ba.kernel_2dof = RobustKernel::Cauchy(std::sqrt(kChi2Dof2));
      ba.kernel_3dof = RobustKernel::Cauchy(std::sqrt(kChi2Dof3));
      break;
  }
  return ba;
}

LmSchedule lm_schedule_for(const SceneConfig& c) {
  LmSchedule s;
  s.max_iters = c.max_iters;
  s.lambda0 = c.lambda0;
  return s;
}

Scene generate_scene(const SceneConfig& config) {
  validate_scene_config(config);
  const SceneConfig& c = config;
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Scene scene;
  scene.config = c;
  scene.camera = CameraIntrinsics::Create(c.fx, c.fy, c.cx, c.cy, c.baseline);
  const CameraIntrinsics& cam = scene.camera;
  const DepthNoiseModel depth_model =
      DepthNoiseModel::Create(c.depth_c0, c.depth_c1, c.depth_zref);
  GroundTruth& gt = scene.truth;

  const std::vector<Se3Pose> poses = MakeTrajectory(c, rng);
  for (int i = 0; i < c.keyframes; ++i) {
    gt.poses[KeyframeId(i)] = poses[i];
  }

  const double half = 0.5 * c.extent;
  const int max_attempts = 1000;

  // Points: uniform in the cube, kept when seen by at least two keyframes.
  for (int id = 0; id < c.points; ++id) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      const Vec3 x(Uniform(rng, -half, half), Uniform(rng, -half, half),
                   Uniform(rng, -half, half));
      int seen = 0;
      for (const Se3Pose& p : poses) seen += See(p, cam, c, x) ? 1 : 0;
      if (seen < 2) continue;
      gt.points[PointId(id)] = x;
      placed = true;
    }
    if (!placed) {
      throw DegenerateError("scene: cannot place a point seen by two keyframes");
    }
  }

  // Lines: random midpoint, direction and length, kept when both endpoints
  // are seen (with enough image length) by at least three keyframes.
  auto line_seen = [&](const Se3Pose& pose, const Vec3& p, const Vec3& q) {
    const auto vp = See(pose, cam, c, p);
    const auto vq = See(pose, cam, c, q);
    return vp && vq && (vp->pixel - vq->pixel).norm() >= c.min_segment_px;
  };
  for (int id = 0; id < c.lines; ++id) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      const Vec3 mid(Uniform(rng, -half, half), Uniform(rng, -half, half),
                     Uniform(rng, -half, half));
      Vec3 dir = Gaussian3(rng, 1.0);
      if (dir.norm() < 1e-6) continue;
      dir.normalize();
      const double len = Uniform(rng, c.line_min_length, c.line_max_length);
      const Vec3 p = mid - 0.5 * len * dir;
      const Vec3 q = mid + 0.5 * len * dir;
      int seen = 0;
      for (const Se3Pose& pose : poses) seen += line_seen(pose, p, q) ? 1 : 0;
      if (seen < 3) continue;
      gt.lines[LineId(id)] = {p, q};
      placed = true;
    }
    if (!placed) {
      throw DegenerateError("scene: cannot place a line seen by three keyframes");
    }
  }
  for (const auto& [id, l] : gt.lines) {
    gt.line_descriptors[id] = RandomDescriptor(rng, c.descriptor_bits);
  }

  // Initial map values.
  SparseMap& map = scene.map;
  const double rot_sigma = c.pose_perturb_deg * kDegToRad / std::sqrt(3.0);
  const double trans_sigma = c.pose_perturb_m / std::sqrt(3.0);
  for (const auto& [id, pose] : gt.poses) {
    if (id == gt.poses.begin()->first) {
      map.AddKeyframe(id, pose, cam);
      continue;
    }
    const Vec3 dphi = Gaussian3(rng, rot_sigma);
    const Vec3 dc = Gaussian3(rng, trans_sigma);
    const Mat3 r = so3_exp(dphi) * pose.rotation();
    const Vec3 center = pose.center() + dc;
    map.AddKeyframe(id, Se3Pose::FromTrusted(r, -r * center), cam);
  }
  const double lm_sigma = c.landmark_perturb_m / std::sqrt(3.0);
  for (const auto& [id, x] : gt.points) {
    map.AddPoint({id, x + Gaussian3(rng, lm_sigma)});
  }
  for (const auto& [id, l] : gt.lines) {
    LineLandmark lm;
    lm.id = id;
    lm.p = l.p + Gaussian3(rng, lm_sigma);
    lm.q = l.q + Gaussian3(rng, lm_sigma);
    map.AddLine(lm);
  }

  // Observations, keyframe by keyframe.
  auto noisy_depth = [&](double z) -> std::optional<double> {
    const double d =
        z + c.depth_noise_scale * sigma_z(depth_model, z) * gauss(rng);
    if (!(d > 0.0)) return std::nullopt;
    return d;
  };
  // A line landmark is created from its first observation, which therefore
  // keeps its depth unless every line observation is mono; later
  // observations drop out per the mono fraction.
  std::set<LineId> created;
  for (const auto& [kid, pose] : gt.poses) {
    for (const auto& [pid, x] : gt.points) {
      const auto v = See(pose, cam, c, x);
      if (!v) continue;
      PointObservation truth;
      truth.pixel = v->pixel;
      truth.depth = v->depth;
      gt.point_obs[{kid, pid}] = truth;

      PointObservation obs;
      const double nu = gauss(rng), nv = gauss(rng);
      obs.pixel = v->pixel + c.pixel_sigma * Vec2(nu, nv);
      const bool mono = unit(rng) < c.point_mono_fraction;
      const std::optional<double> d = noisy_depth(v->depth);
      if (!mono) obs.depth = d;
      map.AddPointObservation(kid, pid, obs);
    }
    for (const auto& [lid, l] : gt.lines) {
      if (!line_seen(pose, l.p, l.q)) continue;
      const Vec3 dir = (l.q - l.p).normalized();
      const double sp = c.line_fragment_jitter * gauss(rng);
      const double sq = c.line_fragment_jitter * gauss(rng);
      Vec3 p = l.p + sp * dir;
      Vec3 q = l.q + sq * dir;
      if (!line_seen(pose, p, q)) {
        p = l.p;
        q = l.q;
      }
      const Vec3 pc = pose * p;
      const Vec3 qc = pose * q;
      LineObservation truth;
      truth.p = project(cam, pc);
      truth.q = project(cam, qc);
      truth.depth_p = pc.z();
      truth.depth_q = qc.z();
      gt.line_obs[{kid, lid}] = truth;
      gt.line_obs_endpoints[{kid, lid}] = {p, q};

      LineObservation obs;
      const double n0 = gauss(rng), n1 = gauss(rng), n2 = gauss(rng),
                   n3 = gauss(rng);
      obs.p = truth.p + c.pixel_sigma * Vec2(n0, n1);
      obs.q = truth.q + c.pixel_sigma * Vec2(n2, n3);
      const bool first =
          created.insert(lid).second && c.line_mono_fraction < 1.0;
      const bool mono = unit(rng) < c.line_mono_fraction && !first;
      const std::optional<double> dp = noisy_depth(pc.z());
      const std::optional<double> dq = noisy_depth(qc.z());
      if (!mono && dp && dq) {
        obs.depth_p = dp;
        obs.depth_q = dq;
      }
      obs.descriptor = Flip(gt.line_descriptors.at(lid), c.bitflip_rate, rng);
      if (obs.Length() < 1e-9) continue;
      map.AddLineObservation(kid, lid, obs);
    }
  }
  return scene;
}

SparseMap ground_truth_map(const Scene& scene) {
  SparseMap map = scene.map;
  for (const auto& [id, pose] : scene.truth.poses) map.SetPose(id, pose);
  for (const auto& [id, x] : scene.truth.points) map.SetPointPosition(id, x);
  for (const auto& [id, l] : scene.truth.lines) map.SetLineEndpoints(id, l.p, l.q);
  return map;
}

}  // namespace plmap
