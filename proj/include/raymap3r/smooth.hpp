#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <string_view>

#include "raymap3r/backbone.hpp"
#include "raymap3r/error.hpp"
#include "raymap3r/geom.hpp"

namespace raymap3r::smooth {

enum class Mode { full, fixed, accel_only, state_only, off };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::full: return "full";
    case Mode::fixed: return "fixed";
    case Mode::accel_only: return "accel_only";
    case Mode::state_only: return "state_only";
    case Mode::off: return "off";
  }
  return "full";
}

inline Mode mode_from_string(std::string_view s) {
  if (s == "full") return Mode::full;
  if (s == "fixed") return Mode::fixed;
  if (s == "accel_only") return Mode::accel_only;
  if (s == "state_only") return Mode::state_only;
  if (s == "off") return Mode::off;
  throw ConfigError("smooth.mode", "one of full, fixed, accel_only, state_only, off");
}

struct Config {
  double lambda = 10.0;
  Mode mode = Mode::full;
  double fixed_beta = 0.5;

  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("smooth.lambda", "lambda > 0");
    if (!(fixed_beta >= 0.0 && fixed_beta <= 1.0)) throw ConfigError("smooth.fixed_beta", "0 <= fixed_beta <= 1");
  }

  friend bool operator==(const Config&, const Config&) = default;
};

/// Causal filter memory. Positions are camera centers in world coordinates.
struct SmootherState {
  Eigen::Vector3d prev_position = Eigen::Vector3d::Zero();
  Eigen::Vector3d prev_displacement = Eigen::Vector3d::Zero();
  Eigen::Vector3d filtered_displacement = Eigen::Vector3d::Zero();
  Eigen::Vector3d smoothed_position = Eigen::Vector3d::Zero();
  long frames_seen = 0;
};

/// Mean L2 norm of the proposed (pre-gating) state update over all tokens.
inline double state_change_signal(const StateDelta& delta) {
  if (delta.tokens.rows() == 0) return 0.0;
  return delta.tokens.rowwise().norm().sum() / static_cast<double>(delta.tokens.rows());
}

/// Smoothing coefficient for acceleration `a` and state change `sc`.
inline double beta_for(const Config& cfg, double a, double sc) {
  switch (cfg.mode) {
    case Mode::full: return 1.0 / (1.0 + cfg.lambda * std::abs(a * sc));
    case Mode::fixed: return cfg.fixed_beta;
    case Mode::accel_only: return 1.0 / (1.0 + cfg.lambda * a);
    case Mode::state_only: return 1.0 / (1.0 + cfg.lambda * sc);
    case Mode::off: return 1.0;
  }
  return 1.0;
}

struct StepResult {
  RigidPose pose;
  SmootherState state;
  double beta = 1.0;
  double accel = 0.0;
};

/// Filter inter-frame displacements of the camera center:
///   d̂_t = beta_t d_t + (1 - beta_t) d̂_{t-1},  p̂_t = p̂_{t-1} + d̂_t.
/// Orientation passes through. The first two frames pass through unchanged because
/// the acceleration is undefined.
inline StepResult smooth_step(const RigidPose& pose, double sc, const SmootherState& state, const Config& cfg) {
  StepResult r;
  r.state = state;
  const Eigen::Vector3d position = pose.center();

  if (state.frames_seen == 0) {
    r.state.smoothed_position = position;
    r.state.filtered_displacement.setZero();
  } else {
    const Eigen::Vector3d d = position - state.prev_position;
    if (state.frames_seen >= 2) {
      r.accel = (d - state.prev_displacement).norm();
      r.beta = beta_for(cfg, r.accel, sc);
    }
    r.state.filtered_displacement = r.beta * d + (1.0 - r.beta) * state.filtered_displacement;
    r.state.smoothed_position = state.smoothed_position + r.state.filtered_displacement;
    r.state.prev_displacement = d;
  }
  r.state.prev_position = position;
  r.state.frames_seen = state.frames_seen + 1;
  r.pose = RigidPose::from_camera_center(pose.camera_to_world_rotation(), r.state.smoothed_position);
  return r;
}

}  // namespace raymap3r::smooth
