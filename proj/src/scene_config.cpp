#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "plmap/harness.hpp"

namespace plmap {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ToDouble(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

long long ToInt(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v +
                      "'");
  }
  return out;
}

template <typename E>
E ToEnum(const std::string& key, const std::string& v,
         const std::map<std::string, E>& names) {
  auto it = names.find(v);
  if (it == names.end()) {
    std::string allowed;
    for (const auto& [name, e] : names) allowed += " " + name;
    throw ConfigError("config: '" + key + "' must be one of" + allowed);
  }
  return it->second;
}

const std::map<std::string, Trajectory> kTrajectories{
    {"orbit", Trajectory::kOrbit}, {"corridor", Trajectory::kCorridor}};
const std::map<std::string, RobustKernel::Kind> kKernels{
    {"none", RobustKernel::Kind::kNone},
    {"huber", RobustKernel::Kind::kHuber},
    {"cauchy", RobustKernel::Kind::kCauchy}};
const std::map<std::string, PointModel> kPointModels{
    {"identity", PointModel::kIdentityCov},
    {"propagated", PointModel::kPropagatedCov},
    {"depth", PointModel::kDepthResidual}};
const std::map<std::string, LinearSolver> kSolvers{
    {"dense", LinearSolver::kDense}, {"schur", LinearSolver::kSchur}};

template <typename E>
std::string NameOf(E value, const std::map<std::string, E>& names) {
  for (const auto& [name, e] : names) {
    if (e == value) return name;
  }
  return "?";
}

using Setter = std::function<void(SceneConfig&, const std::string&)>;

struct Field {
  Setter set;
  std::function<std::string(const SceneConfig&)> get;
};

std::string Fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

#define PLMAP_REAL(name)                                                \
  {#name,                                                               \
   {[](SceneConfig& c, const std::string& v) { c.name = ToDouble(#name, v); }, \
    [](const SceneConfig& c) { return Fmt(c.name); }}}
#define PLMAP_INT(name)                                                 \
  {#name,                                                               \
   {[](SceneConfig& c, const std::string& v) {                          \
      c.name = static_cast<decltype(c.name)>(ToInt(#name, v));          \
    },                                                                  \
    [](const SceneConfig& c) { return std::to_string(c.name); }}}
#define PLMAP_ENUM(name, table)                                         \
  {#name,                                                               \
   {[](SceneConfig& c, const std::string& v) {                          \
      c.name = ToEnum(#name, v, table);                                 \
    },                                                                  \
    [](const SceneConfig& c) { return NameOf(c.name, table); }}}

const std::map<std::string, Field>& Fields() {
  static const std::map<std::string, Field> fields{
      PLMAP_INT(seed),
      PLMAP_INT(keyframes),
      PLMAP_INT(points),
      PLMAP_INT(lines),
      PLMAP_ENUM(trajectory, kTrajectories),
      PLMAP_REAL(extent),
      PLMAP_REAL(orbit_radius),
      PLMAP_REAL(fx),
      PLMAP_REAL(fy),
      PLMAP_REAL(cx),
      PLMAP_REAL(cy),
      PLMAP_INT(width),
      PLMAP_INT(height),
      PLMAP_REAL(baseline),
      PLMAP_REAL(min_depth),
      PLMAP_REAL(max_depth),
      PLMAP_REAL(pixel_sigma),
      PLMAP_REAL(depth_noise_scale),
      PLMAP_REAL(depth_c0),
      PLMAP_REAL(depth_c1),
      PLMAP_REAL(depth_zref),
      PLMAP_REAL(point_mono_fraction),
      PLMAP_REAL(line_mono_fraction),
      PLMAP_INT(descriptor_bits),
      PLMAP_REAL(bitflip_rate),
      PLMAP_REAL(line_fragment_jitter),
      PLMAP_REAL(line_min_length),
      PLMAP_REAL(line_max_length),
      PLMAP_REAL(min_segment_px),
      PLMAP_REAL(pose_perturb_m),
      PLMAP_REAL(pose_perturb_deg),
      PLMAP_REAL(landmark_perturb_m),
      PLMAP_REAL(model_pixel_sigma),
      PLMAP_REAL(mu),
      PLMAP_ENUM(kernel, kKernels),
      PLMAP_ENUM(point_model, kPointModels),
      PLMAP_ENUM(solver, kSolvers),
      PLMAP_INT(max_iters),
      PLMAP_REAL(lambda0),
      PLMAP_REAL(voma_resolution),
      PLMAP_INT(voma_batch),
      PLMAP_INT(voma_queue),
      PLMAP_REAL(voma_image_scale),
      PLMAP_REAL(room_half_size),
      PLMAP_INT(runs),
  };
  return fields;
}

#undef PLMAP_REAL
#undef PLMAP_INT
#undef PLMAP_ENUM

void Require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

bool IsRate(double r) { return r >= 0.0 && r <= 1.0; }

}  // namespace

SceneConfig parse_scene_config(const std::string& text) {
  SceneConfig config;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    auto it = Fields().find(key);
    if (it == Fields().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(config, value);
  }
  validate_scene_config(config);
  return config;
}

SceneConfig load_scene_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene_config(ss.str());
}

void validate_scene_config(const SceneConfig& c) {
  Require(c.keyframes > 0 && c.points > 0 && c.lines > 0,
          "keyframes, points and lines must be positive");
  Require(c.extent > 0.0 && c.orbit_radius > 0.0, "extent and radius > 0");
  Require(c.fx > 0.0 && c.fy > 0.0, "focal lengths must be positive");
  Require(c.width > 2 && c.height > 2, "image size too small");
  Require(c.baseline > 0.0, "baseline must be positive");
  Require(c.min_depth > 0.0 && c.min_depth < c.max_depth, "bad depth range");
  Require(c.pixel_sigma >= 0.0 && c.depth_noise_scale >= 0.0,
          "noise levels must be non-negative");
  Require(c.depth_c0 >= 0.0 && c.depth_c1 >= 0.0, "depth model coefficients");
  Require(IsRate(c.point_mono_fraction) && IsRate(c.line_mono_fraction) &&
              IsRate(c.bitflip_rate),
          "rates must lie in [0, 1]");
  Require(c.descriptor_bits > 0, "descriptor_bits must be positive");
  Require(c.line_fragment_jitter >= 0.0, "line_fragment_jitter >= 0");
  Require(c.line_min_length > 0.0 && c.line_min_length <= c.line_max_length,
          "bad line length range");
  Require(c.min_segment_px >= 0.0, "min_segment_px >= 0");
  Require(c.pose_perturb_m >= 0.0 && c.pose_perturb_deg >= 0.0 &&
              c.landmark_perturb_m >= 0.0,
          "perturbations must be non-negative");
  Require(c.model_pixel_sigma > 0.0, "model_pixel_sigma must be positive");
  Require(c.mu >= 0.0 && c.mu <= 1.0, "mu must lie in [0, 1]");
  Require(c.max_iters >= 0 && c.lambda0 > 0.0, "bad solver schedule");
  Require(c.voma_resolution > 0.0 && c.voma_batch > 0 && c.voma_queue > 0,
          "bad volumetric map settings");
  Require(c.voma_image_scale > 0.0 && c.voma_image_scale <= 1.0,
          "voma_image_scale must lie in (0, 1]");
  Require(c.room_half_size > 0.0, "room_half_size must be positive");
  Require(c.runs > 0, "runs must be positive");
}

std::string describe_scene_config(const SceneConfig& config) {
  std::string out;
  for (const auto& [key, field] : Fields()) {
    out += key + " = " + field.get(config) + "\n";
  }
  return out;
}

}  // namespace plmap
