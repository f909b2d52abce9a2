#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "raymap3r/eval.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/pipeline.hpp"
#include "raymap3r/sim.hpp"

namespace raymap3r {

/// Per-sequence scores of a run against ground truth.
struct SequenceMetrics {
  std::string name;
  double ate = 0.0;
  double rpe_trans = 0.0;
  double rpe_rot = 0.0;
  double abs_rel = 0.0;
  double delta_125 = 0.0;
  double chamfer = 0.0;
  double accuracy = 0.0;
  double completion = 0.0;
};

struct BenchmarkOptions {
  int cloud_stride = 8;  // pixel subsampling of the accumulated clouds
  int rpe_delta = 1;
  eval::Alignment alignment = eval::Alignment::sim3;
  eval::DepthProtocol depth_protocol = eval::DepthProtocol::per_sequence_median;
};

inline eval::MetricsReport to_report(const SequenceMetrics& m) {
  eval::MetricsReport r;
  r.ate_rmse = m.ate;
  r.rpe_trans = m.rpe_trans;
  r.rpe_rot = m.rpe_rot;
  r.abs_rel = m.abs_rel;
  r.delta_125 = m.delta_125;
  r.accuracy = m.accuracy;
  r.completion = m.completion;
  r.chamfer = m.chamfer;
  return r;
}

/// Scores an estimate against ground truth frame by frame (same length, same order).
inline SequenceMetrics evaluate_sequence(const Intrinsics& intr, const eval::Trajectory& est, const eval::Trajectory& gt,
                                         std::span<const DepthMap> pred_depth, std::span<const DepthMap> gt_depth,
                                         const BenchmarkOptions& opt = {}) {
  if (est.size() != gt.size() || pred_depth.size() != est.size() || gt_depth.size() != est.size()) {
    throw ShapeError("evaluate_sequence: trajectories and depth lists differ in length");
  }
  if (est.size() < 3) throw Error("evaluate_sequence: need at least 3 frames");
  if (opt.cloud_stride < 1) throw Error("evaluate_sequence: cloud_stride must be >= 1");

  SequenceMetrics m;
  const auto a = eval::ate(est, gt, opt.alignment);
  m.ate = a.rmse;
  const auto r = eval::rpe(est, gt, opt.rpe_delta);
  m.rpe_trans = r.trans;
  m.rpe_rot = r.rot;
  const auto d = eval::depth_metrics(pred_depth, gt_depth, opt.depth_protocol);
  m.abs_rel = d.abs_rel;
  m.delta_125 = d.delta_125;

  // Clouds are registered through their per-pixel correspondences; the camera centers
  // of a mostly forward-moving path leave the rotation about the path poorly determined.
  PointCloud pred_cloud, gt_cloud;
  std::vector<Eigen::Vector3d> src, dst;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto& pd = pred_depth[i];
    const auto& gd = gt_depth[i];
    if (pd.width() != gd.width() || pd.height() != gd.height()) {
      throw ShapeError("evaluate_sequence: predicted and ground-truth depth sizes differ");
    }
    for (int y = 0; y < pd.height(); y += opt.cloud_stride) {
      for (int x = 0; x < pd.width(); x += opt.cloud_stride) {
        if (pd.is_valid(x, y)) pred_cloud.points.push_back(unproject_pixel(x, y, pd.values(x, y), intr, est.poses[i]));
        if (gd.is_valid(x, y)) gt_cloud.points.push_back(unproject_pixel(x, y, gd.values(x, y), intr, gt.poses[i]));
        if (pd.is_valid(x, y) && gd.is_valid(x, y)) {
          src.push_back(pred_cloud.points.back());
          dst.push_back(gt_cloud.points.back());
        }
      }
    }
  }
  if (pred_cloud.empty() || gt_cloud.empty()) throw Error("evaluate_sequence: no valid depth to build clouds");
  SimTransform registration = a.alignment;
  if (opt.alignment != eval::Alignment::none) {
    try {
      registration = weighted_umeyama(std::span<const Eigen::Vector3d>(src), dst, std::vector<double>(src.size(), 1.0));
    } catch (const DegenerateError&) {
    }
  }
  for (auto& p : pred_cloud.points) p = registration.apply(p);
  const auto rc = eval::recon_metrics(pred_cloud, gt_cloud, 0);
  m.chamfer = rc.chamfer;
  m.accuracy = rc.accuracy;
  m.completion = rc.completion;
  return m;
}

/// Scores the emitted frames of one run against simulator ground truth.
inline SequenceMetrics evaluate_run(const sim::SceneSpec& spec, const std::vector<FrameRecord>& frames,
                                    const BenchmarkOptions& opt = {}) {
  eval::Trajectory est, gt;
  std::vector<DepthMap> pred_depth, gt_depth;
  for (const auto& f : frames) {
    auto truth = sim::raycast(spec, f.frame_index, true);
    est.push_back(f.timestamp, f.pose);
    gt.push_back(f.timestamp, truth.pose);
    pred_depth.push_back(f.prediction.depth);
    gt_depth.push_back(std::move(truth.depth));
  }
  auto m = evaluate_sequence(spec.intrinsics, est, gt, pred_depth, gt_depth, opt);
  m.name = spec.name;
  return m;
}

/// Runs one configuration over one simulated sequence and scores it.
inline SequenceMetrics run_and_evaluate(const sim::SceneSpec& spec, const PipelineConfig& cfg,
                                        const BenchmarkOptions& opt = {}) {
  sim::SimulatedBackbone backbone(spec, cfg.patch_size);
  MemorySink sink;
  sink.keep_maps = false;
  StreamingRunner runner(cfg);
  const auto summary = runner.run(backbone, sink);
  if (!summary.ok()) {
    throw Error(spec.name + ": run failed at frame " + std::to_string(summary.failures.front().frame_index) + ": " +
                summary.failures.front().message);
  }
  return evaluate_run(spec, sink.frames, opt);
}

namespace detail {

/// Calls task(i) for i in [0, count) on up to `jobs` threads; rethrows the first failure.
template <class F>
void parallel_for(std::size_t count, unsigned jobs, F&& task) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

struct AblationRow {
  std::string name;
  bool r = false, m = false, s = false;
  double ate = 0.0;
  double abs_rel = 0.0;
  double chamfer = 0.0;
  std::vector<SequenceMetrics> sequences;
};

/// The five component settings in table order.
inline std::vector<AblationRow> ablation_rows() {
  return {{"Base", false, false, false, 0, 0, 0, {}}, {"R", true, false, false, 0, 0, 0, {}},
          {"R+M", true, true, false, 0, 0, 0, {}},
          {"R+S", true, false, true, 0, 0, 0, {}}, {"Full", true, true, true, 0, 0, 0, {}}};
}

/// Mean ATE, AbsRel and Chamfer of every row over `suite`; `base` supplies module settings.
/// Sequences and rows are spread over `jobs` threads; results do not depend on it.
inline std::vector<AblationRow> run_ablation(const std::vector<sim::SceneSpec>& suite, const PipelineConfig& base,
                                             const BenchmarkOptions& opt = {}, unsigned jobs = 1) {
  if (suite.empty()) throw Error("run_ablation: empty suite");
  auto rows = ablation_rows();
  for (auto& row : rows) row.sequences.resize(suite.size());
  detail::parallel_for(rows.size() * suite.size(), jobs, [&](std::size_t k) {
    auto& row = rows[k / suite.size()];
    PipelineConfig cfg = base;
    cfg.enable_r = row.r;
    cfg.enable_m = row.m;
    cfg.enable_s = row.s;
    row.sequences[k % suite.size()] = run_and_evaluate(suite[k % suite.size()], cfg, opt);
  });
  for (auto& row : rows) {
    for (const auto& m : row.sequences) {
      row.ate += m.ate;
      row.abs_rel += m.abs_rel;
      row.chamfer += m.chamfer;
    }
    const auto n = static_cast<double>(suite.size());
    row.ate /= n;
    row.abs_rel /= n;
    row.chamfer /= n;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Dynamic-map evaluation over a stratified suite.

struct DynmapSequence {
  std::string name;
  sim::Stratum stratum = sim::Stratum::low;
  double dynamic_ratio = 0.0;
  eval::DynmapScores scores;
};

struct DynmapSuiteReport {
  std::vector<DynmapSequence> sequences;
  std::array<std::optional<double>, 3> stratum_disc;  // mean per-sequence disc for low, medium, high
  std::array<std::size_t, 3> stratum_count{};
  std::optional<double> pooled_auc;  // per-frame AUC averaged over every frame of the suite
  std::optional<double> mean_iou;
  std::optional<double> spearman_rho;  // IoU against dynamic ratio across sequences
};

/// Ground-truth-labelled discrepancy maps of one run (every frame processed with R).
inline std::vector<eval::DynmapFrame> dynmap_frames(const sim::SceneSpec& spec, const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  c.enable_r = true;
  sim::SimulatedBackbone backbone(spec, c.patch_size);
  MemorySink sink;
  StreamingRunner runner(c);
  const auto summary = runner.run(backbone, sink);
  if (!summary.ok()) throw Error(spec.name + ": run failed: " + summary.failures.front().message);
  std::vector<eval::DynmapFrame> out;
  for (auto& f : sink.frames) {
    if (!f.discrepancy) continue;
    auto truth = sim::raycast(spec, f.frame_index, true);
    out.push_back({std::move(f.discrepancy->delta), std::move(truth.dynamic_mask), std::move(f.discrepancy->included)});
  }
  return out;
}

inline DynmapSuiteReport run_dynmap_suite(const std::vector<sim::StratifiedScene>& suite, const PipelineConfig& cfg,
                                          const eval::DynmapOptions& opt = {}, unsigned jobs = 1) {
  if (suite.empty()) throw Error("run_dynmap_suite: empty suite");
  DynmapSuiteReport rep;
  rep.sequences.resize(suite.size());
  detail::parallel_for(suite.size(), jobs, [&](std::size_t i) {
    const auto frames = dynmap_frames(suite[i].spec, cfg);
    rep.sequences[i] = {suite[i].spec.name, suite[i].stratum, suite[i].dynamic_ratio, eval::dynmap_metrics(frames, opt)};
  });

  std::array<double, 3> disc_sum{};
  double auc_sum = 0.0, iou_sum = 0.0;
  std::size_t auc_frames = 0, iou_n = 0;
  std::vector<double> ious, ratios;
  for (const auto& s : rep.sequences) {
    const auto k = static_cast<std::size_t>(s.stratum);
    if (s.scores.disc) {
      disc_sum[k] += *s.scores.disc;
      ++rep.stratum_count[k];
    }
    if (s.scores.auc) {
      auc_sum += *s.scores.auc * static_cast<double>(s.scores.auc_frames);
      auc_frames += s.scores.auc_frames;
    }
    if (s.scores.iou) {
      iou_sum += *s.scores.iou;
      ++iou_n;
      ious.push_back(*s.scores.iou);
      ratios.push_back(s.dynamic_ratio);
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    if (rep.stratum_count[k]) rep.stratum_disc[k] = disc_sum[k] / static_cast<double>(rep.stratum_count[k]);
  }
  if (auc_frames) rep.pooled_auc = auc_sum / static_cast<double>(auc_frames);
  if (iou_n) rep.mean_iou = iou_sum / static_cast<double>(iou_n);
  if (ious.size() >= 3) rep.spearman_rho = eval::spearman(ious, ratios);
  return rep;
}

}  // namespace raymap3r
