#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

#include "raymap3r/error.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/grid.hpp"
#include "raymap3r/raymap.hpp"

namespace raymap3r {

/// Latent memory: N state tokens of D features each.
struct StateVector {
  Eigen::MatrixXd tokens;
  long frame_index = -1;  // timestep of the last update, -1 before any

  Eigen::Index token_count() const noexcept { return tokens.rows(); }
  Eigen::Index dims() const noexcept { return tokens.cols(); }
};

/// Proposed state update produced by the decoder for one frame.
struct StateDelta {
  Eigen::MatrixXd tokens;
  long frame_index = -1;  // frame that produced the delta
};

/// Row-stochastic cross-attention of N state tokens over M image tokens.
struct AttentionMap {
  Eigen::MatrixXd weights;

  /// Renormalise each row to sum to one; negative entries are rejected.
  void normalize_rows() {
    if ((weights.array() < 0.0).any() || !weights.allFinite()) {
      throw Error("attention: weights must be finite and non-negative");
    }
    for (Eigen::Index j = 0; j < weights.rows(); ++j) {
      const double sum = weights.row(j).sum();
      if (!(sum > 0.0)) throw Error("attention: row with zero mass");
      weights.row(j) /= sum;
    }
  }

  bool is_row_stochastic(double tol = 1e-6) const {
    if ((weights.array() < 0.0).any()) return false;
    for (Eigen::Index j = 0; j < weights.rows(); ++j) {
      if (std::abs(weights.row(j).sum() - 1.0) > tol) return false;
    }
    return true;
  }
};

/// Per-frame decoder output. Pose, state delta and attention are produced by the
/// main branch only.
struct FramePrediction {
  DepthMap depth;
  Grid<double> confidence;
  std::optional<RigidPose> pose;
  std::optional<StateDelta> state_delta;
  std::optional<AttentionMap> attention;
};

/// Opaque reference to an input frame; only the implementation knows its pixels.
struct FrameHandle {
  std::size_t index = 0;
  double timestamp = 0.0;
};

/// Contract any backbone (a real network adapter or the scene simulator) fulfils.
///
/// A session is single-writer: `initial_state` and the caller's state updates are
/// sequential. `decode_raymap_only` is read-only over the frozen state.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual const Intrinsics& intrinsics() const = 0;
  virtual std::size_t frame_count() const = 0;
  virtual FrameHandle frame(std::size_t index) const = 0;

  /// Fresh memory initialised from `repeated` (session start or a reset).
  virtual StateVector initial_state(const FrameHandle& repeated) = 0;

  /// Image + RayMap decoding against `state`; never mutates the state.
  /// `static_weights` is an optional pixel staticness map for static-biased pose
  /// retrieval; implementations may ignore it.
  virtual FramePrediction decode_main(const FrameHandle& frame, const RayMapTensor& raymap, const StateVector& state,
                                      const Grid<double>* static_weights = nullptr) const = 0;

  /// RayMap-only decoding against the frozen `state`: depth and confidence only.
  virtual FramePrediction decode_raymap_only(const RayMapTensor& raymap, const StateVector& state) const = 0;
};

/// s_t = s_{t-1} + gate ⊙ Δs_t with each token's scalar gate broadcast over its features.
inline StateVector apply_state_update(const StateVector& state, const StateDelta& delta, std::span<const double> gate) {
  if (delta.tokens.rows() != state.tokens.rows() || delta.tokens.cols() != state.tokens.cols()) {
    throw ShapeError("apply_state_update: delta shape differs from state");
  }
  if (static_cast<Eigen::Index>(gate.size()) != state.tokens.rows()) {
    throw ShapeError("apply_state_update: gate length differs from token count");
  }
  StateVector next;
  next.tokens = state.tokens;
  for (Eigen::Index j = 0; j < state.tokens.rows(); ++j) {
    const double g = gate[static_cast<std::size_t>(j)];
    if (!(g >= 0.0 && g <= 1.0)) throw Error("apply_state_update: gate values must lie in [0, 1]");
    next.tokens.row(j) += g * delta.tokens.row(j);
  }
  next.frame_index = delta.frame_index >= 0 ? delta.frame_index : state.frame_index + 1;
  return next;
}

/// Map a prediction into the world frame given by `g`: depths scale by g.scale and
/// the pose is re-expressed so that unprojection commutes with g.
inline FramePrediction transform_prediction(const SimTransform& g, FramePrediction pred) {
  for (std::size_t i = 0; i < pred.depth.values.size(); ++i) {
    if (pred.depth.valid[i]) pred.depth.values[i] *= g.scale;
  }
  if (pred.pose) pred.pose = transform_pose(g, *pred.pose);
  return pred;
}

}  // namespace raymap3r
