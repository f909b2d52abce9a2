#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <vector>

#include "raymap3r/backbone.hpp"
#include "raymap3r/error.hpp"
#include "raymap3r/geom.hpp"

// Reset metric alignment: the boundary frame is decoded before and after a memory
// reset, and the Sim(3) between the two per-pixel point clouds maps the new segment
// back into the metric frame of the old one.
namespace raymap3r::align {

struct ResetPolicy {
  int period = 50;
  bool enabled = true;

  void validate() const {
    if (period < 2) throw ConfigError("reset.period", "period >= 2");
  }

  /// True when the memory is reset after processing `frame` (never on frame 0 or the last frame).
  bool is_reset_frame(std::size_t frame, std::size_t frame_count) const {
    return enabled && frame > 0 && frame + 1 < frame_count && frame % static_cast<std::size_t>(period) == 0;
  }

  friend bool operator==(const ResetPolicy&, const ResetPolicy&) = default;
};

/// Pixels whose staticness weight is below this are dropped from the fit.
inline constexpr double kWeightFloor = 1e-3;
/// Fewer surviving correspondences than this yields a degenerate (identity) correction.
inline constexpr std::size_t kMinCorrespondences = 100;

struct SegmentCorrection {
  SimTransform transform;
  std::size_t reset_frame = 0;
  double residual = 0.0;  // weighted RMS alignment error, meters
  bool degenerate = false;
  std::size_t correspondences = 0;
};

/// Sim(3) mapping the post-reset reconstruction of the repeated frame onto the
/// pre-reset one, weighted by the pixel staticness map of the final pre-reset frame.
/// Never throws on degenerate input: the result is the identity with `degenerate` set.
inline SegmentCorrection estimate_reset_correction(const FramePrediction& pre, const FramePrediction& post,
                                                   const Grid<double>& static_weights, const Intrinsics& intr,
                                                   std::size_t reset_frame = 0) {
  SegmentCorrection out;
  out.reset_frame = reset_frame;
  out.degenerate = true;
  if (!pre.pose || !post.pose) return out;
  if (!pre.depth.values.same_shape(post.depth.values) || !pre.depth.values.same_shape(static_weights) ||
      pre.depth.width() != intr.width || pre.depth.height() != intr.height) {
    throw ShapeError("estimate_reset_correction: depth, weight and intrinsics sizes differ");
  }

  std::vector<Eigen::Vector3d> before, after;
  std::vector<double> weights;
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      if (!pre.depth.is_valid(x, y) || !post.depth.is_valid(x, y)) continue;
      const double w = static_weights(x, y);
      if (!(w >= kWeightFloor)) continue;
      before.push_back(unproject_pixel(x, y, pre.depth.values(x, y), intr, *pre.pose));
      after.push_back(unproject_pixel(x, y, post.depth.values(x, y), intr, *post.pose));
      weights.push_back(w);
    }
  }
  out.correspondences = weights.size();
  if (weights.size() < kMinCorrespondences) return out;

  try {
    out.transform = weighted_umeyama(std::span<const Eigen::Vector3d>(after), before, weights);
  } catch (const DegenerateError&) {
    out.transform = SimTransform::identity();
    return out;
  }
  double num = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    num += weights[i] * (out.transform.apply(after[i]) - before[i]).squaredNorm();
    mass += weights[i];
  }
  out.residual = std::sqrt(num / mass);
  out.degenerate = false;
  return out;
}

/// Uniform-weight overload for callers without a staticness map.
inline SegmentCorrection estimate_reset_correction(const FramePrediction& pre, const FramePrediction& post,
                                                   const Intrinsics& intr, std::size_t reset_frame = 0) {
  return estimate_reset_correction(pre, post, Grid<double>(intr.width, intr.height, 1.0), intr, reset_frame);
}

/// Apply a segment correction to one subsequent prediction.
inline FramePrediction apply_correction(const SegmentCorrection& correction, FramePrediction pred) {
  return transform_prediction(correction.transform, std::move(pred));
}

/// Apply a segment correction to every prediction of a stream tail.
inline std::vector<FramePrediction> apply_correction(const SegmentCorrection& correction,
                                                     std::vector<FramePrediction> tail) {
  for (auto& p : tail) p = transform_prediction(correction.transform, std::move(p));
  return tail;
}

/// Tracks the cumulative correction across resets; each new estimate is expressed
/// relative to the raw frame of the previous segment, so corrections compose.
class SegmentAligner {
 public:
  const SimTransform& cumulative() const noexcept { return cumulative_; }

  void push(const SegmentCorrection& relative) {
    if (!relative.degenerate) cumulative_ = cumulative_.compose(relative.transform);
  }

  FramePrediction correct(FramePrediction pred) const { return transform_prediction(cumulative_, std::move(pred)); }

 private:
  SimTransform cumulative_;
};

}  // namespace raymap3r::align
