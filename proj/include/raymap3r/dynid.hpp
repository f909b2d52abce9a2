#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "raymap3r/backbone.hpp"
#include "raymap3r/error.hpp"
#include "raymap3r/grid.hpp"
#include "raymap3r/raymap.hpp"
#include "raymap3r/stats.hpp"

// Dual-branch dynamic identification: depth discrepancy between the image branch and
// the RayMap-only branch, pooled to image tokens, projected to state tokens through
// cross-attention, and turned into staticness gates for the memory update.
namespace raymap3r::dynid {

struct Config {
  double gamma = 4.0;
  double ema_momentum = 0.8;
  int warmup_frames = 5;
  double epsilon_depth = 1e-3;
  double iqr_floor = 1e-8;

  void validate() const {
    if (!(gamma > 0.0)) throw ConfigError("dynid.gamma", "gamma > 0");
    if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) throw ConfigError("dynid.ema_momentum", "0 <= ema_momentum < 1");
    if (warmup_frames < 0) throw ConfigError("dynid.warmup_frames", "warmup_frames >= 0");
    if (!(epsilon_depth >= 0.0)) throw ConfigError("dynid.epsilon_depth", "epsilon_depth >= 0");
    if (!(iqr_floor >= 0.0)) throw ConfigError("dynid.iqr_floor", "iqr_floor >= 0");
  }

  friend bool operator==(const Config&, const Config&) = default;
};

/// Pixel discrepancy; `included` is 0 where either branch had no valid depth.
struct PixelDiscrepancy {
  Grid<double> delta;
  Grid<std::uint8_t> included;
};

/// Per-image-token discrepancy; tokens without confidence mass are excluded.
struct TokenDiscrepancy {
  std::vector<double> values;
  std::vector<std::uint8_t> included;
};

struct DiscrepancyMaps {
  PixelDiscrepancy pixel;
  TokenDiscrepancy token;
  std::vector<double> state;
};

struct StaticnessWeights {
  std::vector<double> current;
  std::vector<double> ema;
  Grid<double> pixel_map;

  /// All-ones gates for a session of `tokens` state tokens.
  static StaticnessWeights initial(std::size_t tokens) {
    StaticnessWeights w;
    w.current.assign(tokens, 1.0);
    w.ema.assign(tokens, 1.0);
    return w;
  }
};

/// delta_i = |z_main - z_raymap| / max(|z_main|, eps * median(z_main)).
inline PixelDiscrepancy pixel_discrepancy(const FramePrediction& main, const FramePrediction& raymap,
                                          const Config& cfg) {
  const DepthMap& a = main.depth;
  const DepthMap& b = raymap.depth;
  require_same_shape(a.values, b.values, "pixel_discrepancy");

  std::vector<double> main_valid;
  main_valid.reserve(a.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.valid[i]) main_valid.push_back(std::abs(a.values[i]));
  }
  const double floor = main_valid.empty() ? 0.0 : cfg.epsilon_depth * stats::median(main_valid);

  PixelDiscrepancy out{Grid<double>(a.width(), a.height(), 0.0), Grid<std::uint8_t>(a.width(), a.height(), 0)};
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (!a.valid[i] || !b.valid[i]) continue;
    const double denom = std::max(std::abs(a.values[i]), floor);
    if (!(denom > 0.0)) continue;
    out.delta[i] = std::abs(a.values[i] - b.values[i]) / denom;
    out.included[i] = 1;
  }
  return out;
}

/// Confidence-weighted mean of the discrepancy inside each patch.
inline TokenDiscrepancy pool_to_tokens(const PixelDiscrepancy& pixel, const Grid<double>& confidence,
                                       const PatchGrid& patches) {
  require_same_shape(pixel.delta, confidence, "pool_to_tokens");
  if (pixel.delta.width() != patches.width() || pixel.delta.height() != patches.height()) {
    throw ShapeError("pool_to_tokens: patch grid does not match image size");
  }
  TokenDiscrepancy out;
  out.values.assign(patches.token_count(), 0.0);
  out.included.assign(patches.token_count(), 0);
  for (std::size_t k = 0; k < patches.token_count(); ++k) {
    const PixelRect r = patches.rect(k);
    double num = 0.0, den = 0.0;
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        if (!pixel.included(x, y)) continue;
        const double c = confidence(x, y);
        num += c * pixel.delta(x, y);
        den += c;
      }
    }
    if (den > 0.0) {
      out.values[k] = num / den;
      out.included[k] = 1;
    }
  }
  return out;
}

/// Overload for callers without exclusion information (every pixel included).
inline TokenDiscrepancy pool_to_tokens(const Grid<double>& delta, const Grid<double>& confidence,
                                       const PatchGrid& patches) {
  PixelDiscrepancy p{delta, Grid<std::uint8_t>(delta.width(), delta.height(), 1)};
  return pool_to_tokens(p, confidence, patches);
}

/// Attention-weighted average over included tokens, renormalised per row.
inline std::vector<double> project_to_state(const TokenDiscrepancy& tokens, const AttentionMap& attention) {
  const auto& a = attention.weights;
  if (static_cast<std::size_t>(a.cols()) != tokens.values.size() || tokens.included.size() != tokens.values.size()) {
    throw ShapeError("project_to_state: attention columns differ from token count");
  }
  std::vector<double> out(static_cast<std::size_t>(a.rows()), 0.0);
  for (Eigen::Index j = 0; j < a.rows(); ++j) {
    double num = 0.0, mass = 0.0;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      if (!tokens.included[static_cast<std::size_t>(k)]) continue;
      num += a(j, k) * tokens.values[static_cast<std::size_t>(k)];
      mass += a(j, k);
    }
    out[static_cast<std::size_t>(j)] = mass > 0.0 ? num / mass : 0.0;
  }
  return out;
}

/// alpha = sigmoid(gamma * (median - delta) / IQR); all ones when IQR < iqr_floor.
inline std::vector<double> staticness(std::span<const double> delta_state, const Config& cfg) {
  if (delta_state.empty()) throw Error("staticness: no state tokens");
  const auto spread = stats::robust_spread(delta_state);
  const double iqr = spread.iqr();
  std::vector<double> alpha(delta_state.size(), 1.0);
  if (!(iqr >= cfg.iqr_floor) || iqr == 0.0) return alpha;
  for (std::size_t j = 0; j < delta_state.size(); ++j) {
    alpha[j] = stats::sigmoid(cfg.gamma * (spread.median - delta_state[j]) / iqr);
  }
  return alpha;
}

/// Pixel-level staticness over included pixels; excluded pixels get 0.
inline Grid<double> pixel_staticness(const PixelDiscrepancy& pixel, const Config& cfg) {
  Grid<double> map(pixel.delta.width(), pixel.delta.height(), 0.0);
  std::vector<double> values;
  values.reserve(pixel.delta.size());
  for (std::size_t i = 0; i < pixel.delta.size(); ++i) {
    if (pixel.included[i]) values.push_back(pixel.delta[i]);
  }
  if (values.empty()) return map;
  const auto alpha = staticness(values, cfg);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pixel.delta.size(); ++i) {
    if (pixel.included[i]) map[i] = alpha[n++];
  }
  return map;
}

struct StepResult {
  StateVector state;
  StaticnessWeights weights;
  DiscrepancyMaps maps;
};

/// One dual-branch step: discrepancy -> tokens -> state tokens -> alpha, EMA
/// accumulation, and the gated update s_t = s_{t-1} + ema ⊙ Δs_t. During warmup the
/// EMA is forced to one so the update is ungated.
inline StepResult step(const FramePrediction& main, const FramePrediction& raymap_pred, const StateVector& state,
                       const StaticnessWeights& weights, const Config& cfg, const PatchGrid& patches,
                       bool warmup = false) {
  if (!main.state_delta || !main.attention) throw Error("dynid::step: main prediction lacks state delta or attention");
  const auto n = static_cast<std::size_t>(state.tokens.rows());
  if (weights.ema.size() != n) throw ShapeError("dynid::step: EMA length differs from token count");

  StepResult r;
  r.maps.pixel = pixel_discrepancy(main, raymap_pred, cfg);
  r.maps.token = pool_to_tokens(r.maps.pixel, main.confidence, patches);
  r.maps.state = project_to_state(r.maps.token, *main.attention);
  if (r.maps.state.size() != n) throw ShapeError("dynid::step: attention rows differ from token count");

  r.weights.current = staticness(r.maps.state, cfg);
  r.weights.ema.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    r.weights.ema[j] =
        warmup ? 1.0 : weights.ema[j] + (1.0 - cfg.ema_momentum) * (r.weights.current[j] - weights.ema[j]);
  }
  r.weights.pixel_map = pixel_staticness(r.maps.pixel, cfg);
  r.state = apply_state_update(state, *main.state_delta, r.weights.ema);
  return r;
}

}  // namespace raymap3r::dynid
