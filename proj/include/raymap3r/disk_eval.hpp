#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "raymap3r/ablation.hpp"
#include "raymap3r/bundle.hpp"
#include "raymap3r/eval.hpp"
#include "raymap3r/io.hpp"

// Evaluation of run directories (or bundles standing in for estimates) read back from disk.
namespace raymap3r::io {

/// Estimated trajectory of a run directory; a bundle's ground truth stands in when there is none.
inline eval::Trajectory read_estimate_trajectory(const fs::path& dir) {
  if (fs::exists(dir / "trajectory.txt")) return read_trajectory(dir / "trajectory.txt");
  if (fs::exists(dir / "groundtruth.txt")) return read_trajectory(dir / "groundtruth.txt");
  throw IoError(dir.string(), "no trajectory.txt or groundtruth.txt");
}

/// timestamp -> absolute path from a list file, or empty when the file is absent.
inline std::map<double, fs::path> read_frame_list(const fs::path& dir, const char* list) {
  std::map<double, fs::path> out;
  if (!fs::exists(dir / list)) return out;
  for (const auto& e : detail::read_list_file(dir / list)) out.emplace(e.timestamp, dir / e.path);
  return out;
}

/// Scores an estimate against ground truth given as a trajectory plus per-frame depth.
/// Frames are matched by timestamp; depth and cloud metrics need depth for every match.
inline eval::MetricsReport evaluate_estimate(const fs::path& est_dir, const Intrinsics& intr, const eval::Trajectory& gt,
                                             const std::function<std::optional<DepthMap>(std::size_t)>& gt_depth,
                                             const BenchmarkOptions& opt = {}, double depth_scale = kDefaultDepthScale) {
  const auto est = read_estimate_trajectory(est_dir);
  const auto est_depth = read_frame_list(est_dir, "depth.txt");

  eval::Trajectory e, g;
  std::vector<std::size_t> gt_index;
  for (std::size_t i = 0, j = 0; i < est.size(); ++i) {
    while (j < gt.size() && gt.timestamps[j] < est.timestamps[i] - 1e-6) ++j;
    if (j < gt.size() && std::abs(gt.timestamps[j] - est.timestamps[i]) <= 1e-6) {
      e.push_back(est.timestamps[i], est.poses[i]);
      g.push_back(gt.timestamps[j], gt.poses[j]);
      gt_index.push_back(j);
    }
  }
  if (e.size() < 3) throw Error("evaluate: fewer than 3 frames match ground truth by timestamp");

  std::vector<DepthMap> pd, gd;
  bool depth_ok = !est_depth.empty();
  for (std::size_t k = 0; depth_ok && k < e.size(); ++k) {
    const auto it = est_depth.find(e.timestamps[k]);
    auto truth = gt_depth(gt_index[k]);
    if (it == est_depth.end() || !truth) {
      depth_ok = false;
      break;
    }
    pd.push_back(read_depth_png(it->second, depth_scale));
    gd.push_back(std::move(*truth));
  }

  eval::MetricsReport r;
  if (depth_ok) {
    r = to_report(evaluate_sequence(intr, e, g, pd, gd, opt));
  } else {
    r.ate_rmse = eval::ate(e, g, opt.alignment).rmse;
    const auto rp = eval::rpe(e, g, opt.rpe_delta);
    r.rpe_trans = rp.trans;
    r.rpe_rot = rp.rot;
  }
  return r;
}

inline eval::MetricsReport evaluate_against_bundle(const fs::path& est_dir, const SequenceBundle& bundle,
                                                   const BenchmarkOptions& opt = {}) {
  if (!bundle.groundtruth) throw Error("bundle " + bundle.root.string() + " has no ground-truth trajectory");
  return evaluate_estimate(
      est_dir, bundle.intrinsics, *bundle.groundtruth,
      [&](std::size_t i) -> std::optional<DepthMap> {
        if (i >= bundle.frames.size() || !bundle.frames[i].depth) return std::nullopt;
        return read_depth_png(*bundle.frames[i].depth, bundle.depth_scale);
      },
      opt, bundle.depth_scale);
}

/// Dynamic-map scores of a run directory's discrepancy PNGs against a bundle's masks.
inline eval::DynmapScores evaluate_dynmap_dir(const fs::path& run_dir, const SequenceBundle& bundle,
                                              const eval::DynmapOptions& opt = {}) {
  const auto maps = read_frame_list(run_dir, "dynmap.txt");
  if (maps.empty()) throw IoError((run_dir / "dynmap.txt").string(), "no discrepancy maps in run");
  std::vector<eval::DynmapFrame> frames;
  for (const auto& f : bundle.frames) {
    if (!f.mask) continue;
    const auto it = maps.find(f.timestamp);
    if (it == maps.end()) continue;
    auto d = read_delta_png(it->second);
    frames.push_back({std::move(d.delta), read_mask_png(*f.mask), std::move(d.included)});
  }
  if (frames.empty()) throw Error("dynmap: no frame has both a discrepancy map and a mask");
  return eval::dynmap_metrics(frames, opt);
}

}  // namespace raymap3r::io
