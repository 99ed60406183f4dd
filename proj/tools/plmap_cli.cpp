// Command-line driver for the synthetic experiments.
//
// Exit codes: 0 success, 1 experiment failure, 2 configuration error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "plmap/harness.hpp"

namespace {

using nlohmann::json;
using plmap::ExperimentReport;

enum class Format { kCsv, kJson };

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  Format format = Format::kCsv;
  std::vector<std::string> overrides;  // key=value
};

plmap::SceneConfig LoadConfig(const Options& opt) {
  std::string text;
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw plmap::ConfigError("cannot open config '" + opt.config_path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  for (const std::string& kv : opt.overrides) text += "\n" + kv;
  plmap::SceneConfig config = plmap::parse_scene_config(text);
  if (opt.seed) config.seed = *opt.seed;
  return config;
}

json ToJson(const ExperimentReport& r) {
  json rows = json::array();
  for (const auto& row : r.optimization.rows) {
    rows.push_back({{"iteration", row.iteration},
                    {"cost", row.cost},
                    {"candidate_cost", row.candidate_cost},
                    {"lambda", row.lambda},
                    {"accepted", row.accepted}});
  }
  return {{"label", r.label},
          {"seed", r.seed},
          {"pose_trans_rmse", r.pose_trans_rmse},
          {"pose_rot_rmse_deg", r.pose_rot_rmse_deg},
          {"point_rmse", r.point_rmse},
          {"line_along_rms", r.line.along_rms},
          {"line_perp_rms", r.line.perp_rms},
          {"line_total_rms", r.line.total_rms},
          {"reproj_rmse_px", r.reproj_rmse_px},
          {"initial_cost", r.initial_cost},
          {"final_cost", r.final_cost},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"termination", r.optimization.termination},
          {"monotone", r.monotone},
          {"rows", rows}};
}

// Writes to --out, or stdout when it is empty.
void Emit(const Options& opt, const std::string& text) {
  if (opt.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(opt.out);
  if (!out) throw std::runtime_error("cannot write '" + opt.out + "'");
  out << text;
}

std::string Reports(const Options& opt,
                    const std::vector<ExperimentReport>& reports) {
  if (opt.format == Format::kJson) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(ToJson(r));
    return arr.dump(2) + "\n";
  }
  std::ostringstream os;
  plmap::write_reports_csv(os, reports);
  return os.str();
}

// Runs the experiment for config.runs consecutive seeds.
template <typename Fn>
void ForEachSeed(const plmap::SceneConfig& base, Fn fn) {
  for (int k = 0; k < base.runs; ++k) {
    plmap::SceneConfig c = base;
    c.seed = base.seed + static_cast<std::uint64_t>(k);
    fn(c);
  }
}

int GenScene(const Options& opt) {
  const plmap::Scene scene = plmap::generate_scene(LoadConfig(opt));
  std::ostringstream os;
  plmap::write_map(os, scene.map);
  Emit(opt, os.str());
  std::size_t point_obs = 0, line_obs = 0;
  for (const auto& [id, kf] : scene.map.keyframes()) {
    point_obs += kf.points.size();
    line_obs += kf.lines.size();
  }
  std::cerr << "keyframes " << scene.map.keyframes().size() << ", points "
            << scene.map.points().size() << " (" << point_obs
            << " observations), lines " << scene.map.lines().size() << " ("
            << line_obs << " observations)\n";
  return 0;
}

int Ba(const Options& opt) {
  std::vector<ExperimentReport> reports;
  ForEachSeed(LoadConfig(opt), [&](const plmap::SceneConfig& c) {
    reports.push_back(plmap::run_ba_experiment(c));
  });
  Emit(opt, Reports(opt, reports));
  for (const auto& r : reports) {
    if (!r.converged) return 1;
  }
  return 0;
}

int Drift(const Options& opt) {
  std::vector<ExperimentReport> reports;
  ForEachSeed(LoadConfig(opt), [&](const plmap::SceneConfig& c) {
    plmap::DriftResult d = plmap::run_drift_experiment(c);
    reports.push_back(d.line_2d_only);
    reports.push_back(d.full);
  });
  Emit(opt, Reports(opt, reports));
  return 0;
}

int CovAblation(const Options& opt) {
  std::vector<ExperimentReport> reports;
  ForEachSeed(LoadConfig(opt), [&](const plmap::SceneConfig& c) {
    for (const auto& row : plmap::run_covariance_ablation(c)) {
      reports.push_back(row.report);
    }
  });
  Emit(opt, Reports(opt, reports));
  return 0;
}

int Voma(const Options& opt, const std::string& cloud_path) {
  const plmap::VomaReport r = plmap::run_voma_pipeline(LoadConfig(opt));
  json j = {{"keyframes", r.keyframes},
            {"cells", r.cells},
            {"batches", r.batches},
            {"batch_difference", r.batch_difference},
            {"zero_change_rebuild_difference", r.zero_change_rebuild_difference},
            {"rebuild_difference", r.rebuild_difference},
            {"normal_interior_pixels", r.normals.interior_pixels},
            {"normal_fraction_within_0_5_deg", r.normals.Fraction()},
            {"normal_max_angle_deg", r.normals.max_angle_deg},
            {"ok", r.Ok()}};
  if (opt.format == Format::kJson) {
    Emit(opt, j.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "key,value\n";
    for (const auto& [k, v] : j.items()) os << k << "," << v.dump() << "\n";
    Emit(opt, os.str());
  }
  if (!cloud_path.empty()) {
    std::ofstream out(cloud_path);
    if (!out) throw std::runtime_error("cannot write '" + cloud_path + "'");
    const bool ply = cloud_path.size() >= 4 &&
                     cloud_path.compare(cloud_path.size() - 4, 4, ".ply") == 0;
    if (ply) {
      plmap::write_ply(out, r.cloud);
    } else {
      plmap::write_csv(out, r.cloud);
    }
  }
  return r.Ok() ? 0 : 1;
}

int Match(const Options& opt) {
  const plmap::MatchingRow r = plmap::run_matching_experiment(LoadConfig(opt));
  json j = {{"bitflip_rate", r.bitflip_rate}, {"queries", r.queries},
            {"matches", r.matches},           {"correct", r.correct},
            {"precision", r.precision()},     {"recall", r.recall()}};
  if (opt.format == Format::kJson) {
    Emit(opt, j.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "bitflip_rate,queries,matches,correct,precision,recall\n"
       << r.bitflip_rate << "," << r.queries << "," << r.matches << ","
       << r.correct << "," << r.precision() << "," << r.recall() << "\n";
    Emit(opt, os.str());
  }
  return 0;
}

int JacobianCheck(const Options& opt, int trials, double tol) {
  const auto rows = plmap::run_jacobian_check(opt.seed.value_or(1), trials, tol);
  std::ostringstream os;
  bool ok = true;
  if (opt.format == Format::kJson) {
    json arr = json::array();
    for (const auto& r : rows) {
      arr.push_back({{"term", r.term},
                     {"trials", r.trials},
                     {"failures", r.failures},
                     {"max_rel_error", r.max_rel_error}});
    }
    os << arr.dump(2) << "\n";
  } else {
    os << "term,trials,failures,max_rel_error\n";
    for (const auto& r : rows) {
      os << r.term << "," << r.trials << "," << r.failures << ","
         << r.max_rel_error << "\n";
    }
  }
  for (const auto& r : rows) ok = ok && r.failures == 0;
  Emit(opt, os.str());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-line mapping experiments on synthetic scenes"};
  app.require_subcommand(1);
  Options opt;
  std::string format = "csv";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "key = value config file");
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_option("--out", opt.out, "output file (default: stdout)");
    sub->add_option("--format", format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--set", opt.overrides, "config override key=value")
        ->take_all();
  };

  auto* gen = app.add_subcommand("gen-scene", "generate a scene, write its map");
  auto* ba = app.add_subcommand("ba", "full bundle adjustment");
  auto* drift = app.add_subcommand("drift", "2D-only vs full line terms");
  auto* ablation = app.add_subcommand("cov-ablation", "point covariance modes");
  auto* voma = app.add_subcommand("voma", "volumetric map pipeline");
  auto* match = app.add_subcommand("match", "line descriptor matching");
  auto* jac = app.add_subcommand("jacobian-check", "analytic vs numeric");
  for (auto* sub : {gen, ba, drift, ablation, voma, match, jac}) add_common(sub);

  std::string cloud_path;
  voma->add_option("--cloud", cloud_path, "write the global cloud (.ply or .csv)");
  int trials = 200;
  double tol = 1e-5;
  jac->add_option("--trials", trials, "random configurations")
      ->check(CLI::PositiveNumber);
  jac->add_option("--tol", tol, "relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  opt.format = format == "json" ? Format::kJson : Format::kCsv;

  try {
    if (*gen) return GenScene(opt);
    if (*ba) return Ba(opt);
    if (*drift) return Drift(opt);
    if (*ablation) return CovAblation(opt);
    if (*voma) return Voma(opt, cloud_path);
    if (*match) return Match(opt);
    if (*jac) return JacobianCheck(opt, trials, tol);
  } catch (const plmap::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
