#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "raymap3r/error.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/grid.hpp"
#include "raymap3r/knn.hpp"
#include "raymap3r/stats.hpp"

namespace raymap3r::eval {

struct Trajectory {
  std::vector<double> timestamps;
  std::vector<RigidPose> poses;

  std::size_t size() const noexcept { return poses.size(); }
  bool empty() const noexcept { return poses.empty(); }

  void push_back(double t, const RigidPose& pose) {
    if (!timestamps.empty() && !(t > timestamps.back())) throw Error("trajectory: timestamps must strictly increase");
    timestamps.push_back(t);
    poses.push_back(pose);
  }

  void validate() const {
    if (timestamps.size() != poses.size()) throw ShapeError("trajectory: timestamp and pose counts differ");
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
      if (!(timestamps[i] > timestamps[i - 1])) throw Error("trajectory: timestamps must strictly increase");
    }
  }

  std::vector<Eigen::Vector3d> centers() const {
    std::vector<Eigen::Vector3d> c;
    c.reserve(poses.size());
    for (const auto& p : poses) c.push_back(p.center());
    return c;
  }
};

/// Pairs each estimated pose with the ground-truth pose closest in time (within
/// `max_dt` seconds). For real recordings whose streams are not frame-synchronised.
inline std::pair<Trajectory, Trajectory> associate_by_timestamp(const Trajectory& est, const Trajectory& gt,
                                                                double max_dt) {
  std::pair<Trajectory, Trajectory> out;
  std::size_t j = 0;
  for (std::size_t i = 0; i < est.size() && !gt.empty(); ++i) {
    const double t = est.timestamps[i];
    while (j + 1 < gt.size() && std::abs(gt.timestamps[j + 1] - t) <= std::abs(gt.timestamps[j] - t)) ++j;
    if (std::abs(gt.timestamps[j] - t) > max_dt) continue;
    if (!out.second.empty() && gt.timestamps[j] <= out.second.timestamps.back()) continue;
    out.first.push_back(t, est.poses[i]);
    out.second.push_back(gt.timestamps[j], gt.poses[j]);
  }
  return out;
}

enum class Alignment { sim3, se3, none };

struct AteResult {
  double rmse = 0.0;
  SimTransform alignment;
  bool fell_back = false;  // alignment was degenerate and skipped
};

/// Absolute translation error: RMSE of camera-center residuals after aligning the
/// estimate onto the ground truth.
inline AteResult ate(const Trajectory& est, const Trajectory& gt, Alignment alignment = Alignment::sim3) {
  if (est.size() != gt.size()) throw ShapeError("ate: trajectory lengths differ");
  if (est.empty()) throw Error("ate: empty trajectory");
  if (alignment != Alignment::none && est.size() < 3) throw Error("ate: alignment needs at least 3 poses");
  const auto e = est.centers();
  const auto g = gt.centers();
  AteResult r;
  if (alignment != Alignment::none) {
    const std::vector<double> w(e.size(), 1.0);
    try {
      r.alignment = alignment == Alignment::sim3 ? weighted_umeyama(std::span<const Eigen::Vector3d>(e), g, w)
                                                 : weighted_rigid_fit(e, g, w);
    } catch (const DegenerateError&) {
      r.alignment = SimTransform::identity();
      r.fell_back = true;
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) sum += (r.alignment.apply(e[i]) - g[i]).squaredNorm();
  r.rmse = std::sqrt(sum / static_cast<double>(e.size()));
  return r;
}

struct RpeResult {
  double trans = 0.0;  // meters
  double rot = 0.0;    // degrees
  bool fell_back = false;
};

namespace detail {

inline Eigen::Isometry3d camera_to_world(const RigidPose& p) {
  Eigen::Isometry3d m = Eigen::Isometry3d::Identity();
  m.linear() = p.camera_to_world_rotation();
  m.translation() = p.center();
  return m;
}

}  // namespace detail

/// Relative pose error over steps of `delta_frames`, computed on camera-to-world
/// motions after a Sim(3) pre-alignment of the estimate.
inline RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta_frames = 1) {
  if (est.size() != gt.size()) throw ShapeError("rpe: trajectory lengths differ");
  if (delta_frames < 1) throw Error("rpe: delta_frames must be >= 1");
  if (est.size() <= static_cast<std::size_t>(delta_frames)) throw Error("rpe: trajectory too short for delta");

  RpeResult r;
  SimTransform g;
  if (est.size() >= 3) {
    const auto e = est.centers();
    const auto c = gt.centers();
    try {
      g = weighted_umeyama(std::span<const Eigen::Vector3d>(e), c, std::vector<double>(e.size(), 1.0));
    } catch (const DegenerateError&) {
      r.fell_back = true;
    }
  } else {
    r.fell_back = true;
  }

  const auto d = static_cast<std::size_t>(delta_frames);
  double st = 0.0, sr = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + d < est.size(); ++i) {
    const Eigen::Isometry3d gi = detail::camera_to_world(gt.poses[i]);
    const Eigen::Isometry3d gj = detail::camera_to_world(gt.poses[i + d]);
    const Eigen::Isometry3d ei = detail::camera_to_world(transform_pose(g, est.poses[i]));
    const Eigen::Isometry3d ej = detail::camera_to_world(transform_pose(g, est.poses[i + d]));
    const Eigen::Isometry3d err = (gi.inverse() * gj).inverse() * (ei.inverse() * ej);
    st += err.translation().squaredNorm();
    const double angle = rotation_angle_of(err.linear()) * 180.0 / std::numbers::pi;
    sr += angle * angle;
    ++n;
  }
  r.trans = std::sqrt(st / static_cast<double>(n));
  r.rot = std::sqrt(sr / static_cast<double>(n));
  return r;
}

enum class DepthProtocol { per_sequence_median, metric };

struct DepthScores {
  double abs_rel = 0.0;
  double delta_125 = 0.0;  // percent
  double scale = 1.0;      // factor applied to the predictions
  std::size_t pixels = 0;
};

/// AbsRel and delta < 1.25 over all pixels valid in both maps, pooled over the sequence.
inline DepthScores depth_metrics(std::span<const DepthMap> pred, std::span<const DepthMap> gt,
                                 DepthProtocol protocol = DepthProtocol::per_sequence_median) {
  if (pred.size() != gt.size()) throw ShapeError("depth_metrics: sequence lengths differ");
  auto usable = [](const DepthMap& p, const DepthMap& g, std::size_t i) {
    return p.valid[i] && g.valid[i] && p.values[i] > 0.0 && g.values[i] > 0.0;
  };
  std::vector<double> ratios;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    require_same_shape(pred[f].values, gt[f].values, "depth_metrics");
    for (std::size_t i = 0; i < pred[f].values.size(); ++i) {
      if (usable(pred[f], gt[f], i)) ratios.push_back(gt[f].values[i] / pred[f].values[i]);
    }
  }
  if (ratios.empty()) throw Error("depth_metrics: no valid overlap pixels");

  DepthScores s;
  s.pixels = ratios.size();
  if (protocol == DepthProtocol::per_sequence_median) s.scale = stats::median(ratios);
  double rel = 0.0;
  std::size_t good = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    for (std::size_t i = 0; i < pred[f].values.size(); ++i) {
      if (!usable(pred[f], gt[f], i)) continue;
      const double p = s.scale * pred[f].values[i];
      const double g = gt[f].values[i];
      rel += std::abs(p - g) / g;
      if (std::max(p / g, g / p) < 1.25) ++good;
    }
  }
  s.abs_rel = rel / static_cast<double>(s.pixels);
  s.delta_125 = 100.0 * static_cast<double>(good) / static_cast<double>(s.pixels);
  return s;
}

struct ReconScores {
  double accuracy = 0.0;
  double completion = 0.0;
  double chamfer = 0.0;
  std::optional<double> normal_consistency;  // needs >= 3 points per cloud
};

namespace detail {

inline double mean_nn_distance(const std::vector<Eigen::Vector3d>& from, const KdTree& to) {
  double sum = 0.0;
  for (const auto& p : from) sum += std::sqrt(to.nearest(p).squared_distance);
  return sum / static_cast<double>(from.size());
}

inline double mean_nn_cos(const PointCloud& from, const PointCloud& to, const KdTree& tree) {
  double sum = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const auto nn = tree.nearest(from.points[i]);
    sum += std::min(1.0, std::abs(from.normals[i].dot(to.normals[nn.index])));
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace detail

/// Accuracy (pred -> gt), completion (gt -> pred), their mean, and symmetric normal
/// consistency. Existing normals are used; missing ones are estimated with nc_k
/// neighbours. nc_k <= 0 skips normal consistency.
inline ReconScores recon_metrics(const PointCloud& pred, const PointCloud& gt, int nc_k = 16) {
  if (pred.empty() || gt.empty()) throw Error("recon_metrics: empty cloud");
  const KdTree pred_tree(pred.points);
  const KdTree gt_tree(gt.points);
  ReconScores s;
  s.accuracy = detail::mean_nn_distance(pred.points, gt_tree);
  s.completion = detail::mean_nn_distance(gt.points, pred_tree);
  s.chamfer = 0.5 * (s.accuracy + s.completion);

  auto with_normals = [&](const PointCloud& c) -> std::optional<PointCloud> {
    if (c.has_normals()) return c;
    if (c.size() < 3) return std::nullopt;
    return estimate_normals(c, nc_k);
  };
  if (nc_k <= 0) return s;
  const auto pn = with_normals(pred);
  const auto gn = with_normals(gt);
  if (pn && gn) {
    s.normal_consistency = 0.5 * (detail::mean_nn_cos(*pn, *gn, gt_tree) + detail::mean_nn_cos(*gn, *pn, pred_tree));
  }
  return s;
}

/// One frame of dynamic-map evaluation. `valid` (optional, same size) restricts the
/// pixels considered, e.g. to those where both branches produced depth.
struct DynmapFrame {
  Grid<double> delta;
  Grid<std::uint8_t> mask;
  Grid<std::uint8_t> valid;
};

struct DynmapOptions {
  bool per_sequence_threshold = false;
  int histogram_bins = 256;
};

struct DynmapScores {
  std::optional<double> disc;
  bool disc_saturated = false;  // some frame had zero static discrepancy and positive dynamic discrepancy
  std::optional<double> auc;
  std::optional<double> iou;
  std::size_t disc_frames = 0;
  std::size_t auc_frames = 0;
  std::size_t iou_frames = 0;
};

/// Mann-Whitney AUC of `scores` as a classifier of `labels` (1 = positive). nullopt
/// when either class is empty. Ties count one half.
inline std::optional<double> rank_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("rank_auc: lengths differ");
  const auto ranks = stats::fractional_ranks(scores);
  double pos_rank = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      pos_rank += ranks[i];
      ++pos;
    }
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double p = static_cast<double>(pos);
  return (pos_rank - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

/// Otsu threshold over [0, P99] of `values`, widened to the maximum when P99 is zero.
inline double discrepancy_threshold(std::span<const double> values, int bins = 256) {
  if (values.empty()) return 0.0;
  double hi = stats::quantile(values, 0.99);
  if (!(hi > 0.0)) hi = *std::max_element(values.begin(), values.end());
  if (!(hi > 0.0)) return 0.0;
  return stats::otsu_threshold(values, 0.0, hi, bins);
}

inline DynmapScores dynmap_metrics(std::span<const DynmapFrame> frames, const DynmapOptions& opt = {}) {
  struct Samples {
    std::vector<double> delta;
    std::vector<std::uint8_t> label;
  };
  auto collect = [](const DynmapFrame& f) {
    require_same_shape(f.delta, f.mask, "dynmap_metrics");
    const bool restricted = !f.valid.empty();
    if (restricted) require_same_shape(f.delta, f.valid, "dynmap_metrics");
    Samples s;
    for (std::size_t i = 0; i < f.delta.size(); ++i) {
      if (restricted && !f.valid[i]) continue;
      s.delta.push_back(f.delta[i]);
      s.label.push_back(f.mask[i] ? 1 : 0);
    }
    return s;
  };

  std::optional<double> shared_threshold;
  if (opt.per_sequence_threshold) {
    std::vector<double> pooled;
    for (const auto& f : frames) {
      const auto s = collect(f);
      pooled.insert(pooled.end(), s.delta.begin(), s.delta.end());
    }
    shared_threshold = discrepancy_threshold(pooled, opt.histogram_bins);
  }

  DynmapScores out;
  double disc_sum = 0.0, auc_sum = 0.0, iou_sum = 0.0;
  for (const auto& f : frames) {
    const auto s = collect(f);
    double dyn = 0.0, sta = 0.0;
    std::size_t nd = 0, ns = 0;
    for (std::size_t i = 0; i < s.delta.size(); ++i) {
      if (s.label[i]) {
        dyn += s.delta[i];
        ++nd;
      } else {
        sta += s.delta[i];
        ++ns;
      }
    }
    if (nd == 0 || ns == 0) continue;

    const double md = dyn / static_cast<double>(nd);
    const double ms = sta / static_cast<double>(ns);
    if (ms > 0.0) {
      disc_sum += md / ms;
    } else if (md > 0.0) {
      out.disc_saturated = true;
    } else {
      disc_sum += 1.0;
    }
    ++out.disc_frames;

    auc_sum += *rank_auc(s.delta, s.label);
    ++out.auc_frames;

    const double thr = shared_threshold ? *shared_threshold : discrepancy_threshold(s.delta, opt.histogram_bins);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < s.delta.size(); ++i) {
      const bool predicted = s.delta[i] > thr;
      inter += predicted && s.label[i];
      uni += predicted || s.label[i];
    }
    iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++out.iou_frames;
  }
  if (out.disc_frames > 0) {
    out.disc = out.disc_saturated ? std::numeric_limits<double>::infinity()
                                  : disc_sum / static_cast<double>(out.disc_frames);
    out.auc = auc_sum / static_cast<double>(out.auc_frames);
    out.iou = iou_sum / static_cast<double>(out.iou_frames);
  }
  return out;
}

/// Spearman rank correlation; nullopt when either input is constant.
inline std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ShapeError("spearman: lengths differ");
  if (xs.size() < 3) throw Error("spearman: need at least 3 samples");
  const auto rx = stats::fractional_ranks(xs);
  const auto ry = stats::fractional_ranks(ys);
  return stats::pearson(rx, ry);
}

/// Every metric a run or benchmark can report; each is optional per task.
struct MetricsReport {
  std::optional<double> ate_rmse;
  std::optional<double> rpe_trans;
  std::optional<double> rpe_rot;
  std::optional<double> abs_rel;
  std::optional<double> delta_125;
  std::optional<double> accuracy;
  std::optional<double> completion;
  std::optional<double> normal_consistency;
  std::optional<double> chamfer;
  std::optional<double> auc;
  std::optional<double> iou;
  std::optional<double> disc;
  std::optional<double> spearman_rho;
};

}  // namespace raymap3r::eval
