#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "raymap3r/ablation.hpp"
#include "raymap3r/bundle.hpp"
#include "raymap3r/config.hpp"
#include "raymap3r/disk_eval.hpp"
#include "raymap3r/disk_sink.hpp"
#include "raymap3r/pipeline.hpp"
#include "raymap3r/sim.hpp"

namespace fs = std::filesystem;
using namespace raymap3r;
using json = nlohmann::ordered_json;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kFrameFailure = 2;

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<bool> enable_r, enable_m, enable_s;
  std::optional<int> reset_period;
  std::optional<double> gamma, lambda;
  std::optional<std::size_t> frames;
  unsigned jobs = 1;
};

void add_module_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "YAML configuration file");
  cmd->add_option("--seed", c.seed, "simulator seed");
  cmd->add_option("--enable-r", c.enable_r, "dual-branch gating (true/false)");
  cmd->add_option("--enable-m", c.enable_m, "reset metric alignment (true/false)");
  cmd->add_option("--enable-s", c.enable_s, "state-aware smoothing (true/false)");
  cmd->add_option("--reset-period", c.reset_period, "frames between memory resets");
  cmd->add_option("--gamma", c.gamma, "staticness sigmoid sharpness");
  cmd->add_option("--lambda", c.lambda, "smoothing sensitivity");
}

config::FullConfig load(const Common& c) {
  config::FullConfig cfg = c.config_path.empty() ? config::FullConfig{} : config::load_config(c.config_path);
  if (c.enable_r) cfg.pipeline.enable_r = *c.enable_r;
  if (c.enable_m) cfg.pipeline.enable_m = *c.enable_m;
  if (c.enable_s) cfg.pipeline.enable_s = *c.enable_s;
  if (c.reset_period) cfg.pipeline.reset.period = *c.reset_period;
  if (c.gamma) cfg.pipeline.dynid.gamma = *c.gamma;
  if (c.lambda) cfg.pipeline.smooth.lambda = *c.lambda;
  cfg.validate();
  return cfg;
}

/// The configured scene, or a generated room (100 frames unless --frames says otherwise).
sim::SceneSpec scene_for(const config::FullConfig& cfg, const Common& c) {
  sim::SceneSpec spec;
  if (cfg.scene) {
    spec = *cfg.scene;
    if (c.seed) spec.seed = *c.seed;
    if (c.frames) spec.frame_count = *c.frames;
  } else {
    sim::RoomOptions opt;
    opt.frames = c.frames.value_or(sim::SceneSpec{}.frame_count);
    spec = sim::make_room_scene(c.seed.value_or(1), opt);
  }
  spec.validate();
  return spec;
}

BenchmarkOptions bench_options(const config::FullConfig& cfg) {
  BenchmarkOptions b;
  b.cloud_stride = cfg.eval.cloud_stride;
  b.rpe_delta = cfg.eval.rpe_delta;
  b.alignment = cfg.eval.alignment;
  b.depth_protocol = cfg.eval.depth_protocol;
  return b;
}

std::string fmt(const std::optional<double>& v, const char* f = "%.4f") {
  if (!v) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, *v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = io::detail::open_out(path);
  out << text;
  io::detail::finish_write(out, path);
}

std::string metrics_table(const eval::MetricsReport& m) {
  std::string s;
  auto row = [&](const char* name, const std::optional<double>& v) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-20s %s\n", name, fmt(v, "%.6f").c_str());
    s += buf;
  };
  row("ATE RMSE [m]", m.ate_rmse);
  row("RPE trans [m]", m.rpe_trans);
  row("RPE rot [deg]", m.rpe_rot);
  row("AbsRel", m.abs_rel);
  row("delta<1.25 [%]", m.delta_125);
  row("Accuracy [m]", m.accuracy);
  row("Completion [m]", m.completion);
  row("Chamfer [m]", m.chamfer);
  if (m.auc) row("AUC", m.auc);
  if (m.iou) row("IoU", m.iou);
  if (m.disc) row("disc", m.disc);
  if (m.spearman_rho) row("Spearman rho", m.spearman_rho);
  return s;
}

json dynmap_json(const eval::DynmapScores& s) {
  json j;
  j["disc"] = s.disc ? json(*s.disc) : json(nullptr);
  j["disc_saturated"] = s.disc_saturated;
  j["auc"] = s.auc ? json(*s.auc) : json(nullptr);
  j["iou"] = s.iou ? json(*s.iou) : json(nullptr);
  j["frames"] = s.auc_frames;
  return j;
}

int cmd_simulate(const Common& c) {
  const auto cfg = load(c);
  const auto spec = scene_for(cfg, c);
  io::Warnings warnings;
  const auto bundle = io::export_simulation(spec, c.out, cfg, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << bundle.frames.size() << " frames of " << spec.name << " to " << c.out << "\n";
  return kOk;
}

struct RunFlags {
  std::string input;
  bool no_depth = false, no_dynmap = false, no_cloud = false, no_eval = false;
  std::optional<int> cloud_stride;
};

int cmd_run(const Common& c, const RunFlags& f) {
  auto cfg = load(c);
  sim::SceneSpec spec;
  std::optional<io::SequenceBundle> bundle;
  if (!f.input.empty()) {
    bundle = io::read_bundle(f.input);
    const auto bundle_cfg = config::load_config(fs::path(f.input) / "config.yaml");
    if (!bundle_cfg.scene) throw Error(f.input + ": bundle carries no simulator scene to replay");
    spec = *bundle_cfg.scene;
  } else {
    spec = scene_for(cfg, c);
  }
  if (f.cloud_stride) cfg.eval.cloud_stride = *f.cloud_stride;
  cfg.validate();

  io::DiskSinkOptions opt;
  opt.save_depth = !f.no_depth;
  opt.save_dynmap = !f.no_dynmap;
  opt.save_cloud = !f.no_cloud;
  opt.cloud_stride = cfg.eval.cloud_stride;
  opt.depth_scale = cfg.eval.depth_scale;

  json info;
  info["sequence"] = spec.name;
  info["seed"] = spec.seed;
  info["frame_count"] = spec.frame_count;
  info["enable_r"] = cfg.pipeline.enable_r;
  info["enable_m"] = cfg.pipeline.enable_m;
  info["enable_s"] = cfg.pipeline.enable_s;
  info["config"] = config::dump_config(cfg);

  sim::SimulatedBackbone backbone(spec, cfg.pipeline.patch_size);
  io::DiskSink sink(c.out, spec.intrinsics, opt, info);
  StreamingRunner runner(cfg.pipeline);
  const RunSummary summary = runner.run(backbone, sink);

  std::optional<eval::MetricsReport> metrics;
  if (!f.no_eval && summary.frames >= 3) {
    eval::Trajectory gt;
    for (std::size_t t = 0; t < spec.frame_count; ++t) gt.push_back(spec.timestamp(t), spec.camera_pose(t));
    metrics = io::evaluate_estimate(
        c.out, spec.intrinsics, gt,
        [&](std::size_t t) -> std::optional<DepthMap> {
          // Same quantization as the predicted depth PNGs.
          const auto raw = io::encode_depth(sim::raycast(spec, t, true).depth, cfg.eval.depth_scale);
          return io::decode_depth(raw, spec.intrinsics.width, spec.intrinsics.height, cfg.eval.depth_scale);
        },
        bench_options(cfg), cfg.eval.depth_scale);
  }
  sink.write_report(metrics);

  std::cout << "frames " << summary.frames << ", resets " << summary.resets << ", failed " << summary.failures.size()
            << "\n";
  if (metrics) std::cout << metrics_table(*metrics);
  if (!summary.ok()) {
    json err;
    err["error"] = "frame_failures";
    err["failed_frames"] = json::array();
    for (const auto& fl : summary.failures) err["failed_frames"].push_back({{"frame", fl.frame_index}, {"message", fl.message}});
    std::cerr << err.dump() << "\n";
    return kFrameFailure;
  }
  return kOk;
}

int cmd_eval(const Common& c, const std::string& run_dir, const std::string& bundle_dir) {
  const auto cfg = load(c);
  const auto bundle = io::read_bundle(bundle_dir);
  const auto m = io::evaluate_against_bundle(run_dir, bundle, bench_options(cfg));
  json j;
  j["run"] = run_dir;
  j["bundle"] = bundle_dir;
  j["metrics"] = io::to_json(m);
  if (!c.out.empty()) write_text(c.out, j.dump(2) + "\n");
  std::cout << metrics_table(m);
  return kOk;
}

int cmd_ablate(const Common& c, std::size_t suite_size) {
  const auto cfg = load(c);
  sim::RoomOptions opt;
  if (c.frames) opt.frames = *c.frames;
  const auto suite = sim::standard_suite(suite_size, c.seed.value_or(1), opt);
  const auto rows = run_ablation(suite, cfg.pipeline, bench_options(cfg), c.jobs);

  json j;
  j["sequences"] = suite.size();
  j["frames"] = opt.frames;
  j["base_seed"] = c.seed.value_or(1);
  j["rows"] = json::array();
  std::string table = "Setting  R  M  S       ATE    AbsRel   Chamfer\n";
  for (const auto& r : rows) {
    j["rows"].push_back({{"name", r.name}, {"R", r.r}, {"M", r.m}, {"S", r.s}, {"ate", r.ate}, {"abs_rel", r.abs_rel}, {"chamfer", r.chamfer}});
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-7s  %c  %c  %c  %8.4f  %8.4f  %8.4f\n", r.name.c_str(), r.r ? 'x' : '-',
                  r.m ? 'x' : '-', r.s ? 'x' : '-', r.ate, r.abs_rel, r.chamfer);
    table += buf;
  }
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "ablation.json", j.dump(2) + "\n");
    write_text(fs::path(c.out) / "ablation.txt", table);
  }
  std::cout << table;
  return kOk;
}

int cmd_dynmap(const Common& c, const std::string& run_dir, const std::string& bundle_dir, std::size_t per_stratum,
               std::optional<double> sigma) {
  const auto cfg = load(c);
  eval::DynmapOptions dopt;
  dopt.per_sequence_threshold = cfg.eval.dynmap_per_sequence_threshold;
  dopt.histogram_bins = cfg.eval.dynmap_histogram_bins;
  json j;
  std::string table;
  if (!run_dir.empty()) {
    if (bundle_dir.empty()) throw Error("dynmap: --run needs --bundle");
    const auto s = io::evaluate_dynmap_dir(run_dir, io::read_bundle(bundle_dir), dopt);
    j = dynmap_json(s);
    table = "disc " + fmt(s.disc) + "  AUC " + fmt(s.auc) + "  IoU " + fmt(s.iou) + "\n";
  } else {
    auto noise = sim::RoomOptions::default_noise();
    if (sigma) noise.sigma_main = noise.sigma_ray = *sigma;
    const auto suite = sim::stratified_suite(per_stratum, c.seed.value_or(1000), c.frames.value_or(60), noise);
    const auto rep = run_dynmap_suite(suite, cfg.pipeline, dopt, c.jobs);
    static const char* names[] = {"Low", "Medium", "High"};
    j["strata"] = json::array();
    table = "Stratum  sequences      disc\n";
    for (std::size_t k = 0; k < 3; ++k) {
      j["strata"].push_back({{"name", names[k]}, {"sequences", rep.stratum_count[k]},
                             {"disc", rep.stratum_disc[k] ? json(*rep.stratum_disc[k]) : json(nullptr)}});
      char buf[128];
      std::snprintf(buf, sizeof buf, "%-7s  %9zu  %8s\n", names[k], rep.stratum_count[k], fmt(rep.stratum_disc[k], "%.3f").c_str());
      table += buf;
    }
    j["auc"] = rep.pooled_auc ? json(*rep.pooled_auc) : json(nullptr);
    j["iou"] = rep.mean_iou ? json(*rep.mean_iou) : json(nullptr);
    j["spearman_rho"] = rep.spearman_rho ? json(*rep.spearman_rho) : json(nullptr);
    j["sequences"] = json::array();
    for (const auto& s : rep.sequences) {
      json e = dynmap_json(s.scores);
      e["name"] = s.name;
      e["stratum"] = names[static_cast<int>(s.stratum)];
      e["dynamic_ratio"] = s.dynamic_ratio;
      j["sequences"].push_back(e);
    }
    table += "AUC " + fmt(rep.pooled_auc) + "  IoU " + fmt(rep.mean_iou) + "  Spearman rho(IoU, ratio) " +
             fmt(rep.spearman_rho, "%.3f") + "\n";
  }
  if (!c.out.empty()) write_text(c.out, j.dump(2) + "\n");
  std::cout << table;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"raymap3r: streaming reconstruction with dual-branch gating, reset alignment and smoothing"};
  app.require_subcommand(1);

  Common c;
  RunFlags rf;
  std::string run_dir, bundle_dir;
  std::size_t suite_size = 20, per_stratum = 10;
  std::optional<double> sigma;

  auto* simulate = app.add_subcommand("simulate", "write a simulated sequence bundle");
  add_module_flags(simulate, c);
  simulate->add_option("--out", c.out, "bundle directory")->required();
  simulate->add_option("--frames", c.frames, "frame count of the generated scene");

  auto* run = app.add_subcommand("run", "run the streaming pipeline");
  add_module_flags(run, c);
  run->add_option("--out", c.out, "run directory")->required();
  run->add_option("--input", rf.input, "bundle written by 'simulate' (default: generated scene)");
  run->add_option("--frames", c.frames, "frame count of the generated scene");
  run->add_option("--cloud-stride", rf.cloud_stride, "pixel stride of the accumulated cloud");
  run->add_flag("--no-depth", rf.no_depth, "skip predicted depth PNGs");
  run->add_flag("--no-dynmap", rf.no_dynmap, "skip discrepancy PNGs");
  run->add_flag("--no-cloud", rf.no_cloud, "skip cloud.ply");
  run->add_flag("--no-eval", rf.no_eval, "skip scoring against the simulator");

  auto* evalc = app.add_subcommand("eval", "score a run directory against a bundle");
  add_module_flags(evalc, c);
  evalc->add_option("--run", run_dir, "run directory (or a bundle)")->required();
  evalc->add_option("--bundle", bundle_dir, "ground-truth bundle")->required();
  evalc->add_option("--out", c.out, "JSON report path");

  auto* ablate = app.add_subcommand("ablate", "Base/R/R+M/R+S/Full over the standard simulated suite");
  add_module_flags(ablate, c);
  ablate->add_option("--suite", suite_size, "number of sequences")->check(CLI::PositiveNumber);
  ablate->add_option("--frames", c.frames, "frames per sequence");
  ablate->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  ablate->add_option("--out", c.out, "output directory for ablation.json and ablation.txt");

  auto* dynmap = app.add_subcommand("dynmap", "dynamic-map scores of a run or of the stratified suite");
  add_module_flags(dynmap, c);
  dynmap->add_option("--run", run_dir, "run directory with discrepancy maps");
  dynmap->add_option("--bundle", bundle_dir, "bundle with dynamic masks");
  dynmap->add_option("--per-stratum", per_stratum, "suite sequences per dynamic-ratio stratum")->check(CLI::PositiveNumber);
  dynmap->add_option("--frames", c.frames, "frames per suite sequence");
  dynmap->add_option("--sigma", sigma, "relative depth noise of both branches in the suite")->check(CLI::NonNegativeNumber);
  dynmap->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  dynmap->add_option("--out", c.out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*simulate) return cmd_simulate(c);
    if (*run) return cmd_run(c, rf);
    if (*evalc) return cmd_eval(c, run_dir, bundle_dir);
    if (*ablate) return cmd_ablate(c, suite_size);
    if (*dynmap) return cmd_dynmap(c, run_dir, bundle_dir, per_stratum, sigma);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return kError;
  }
  return kError;
}
