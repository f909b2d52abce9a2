#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "raymap3r/align.hpp"
#include "raymap3r/backbone.hpp"
#include "raymap3r/dynid.hpp"
#include "raymap3r/error.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/raymap.hpp"
#include "raymap3r/smooth.hpp"

namespace raymap3r {

/// Component toggles and module settings of one streaming run.
struct PipelineConfig {
  bool enable_r = true;  // dual-branch gating
  bool enable_m = true;  // reset metric alignment
  bool enable_s = true;  // state-aware smoothing
  dynid::Config dynid;
  smooth::Config smooth;
  align::ResetPolicy reset;
  int patch_size = 16;

  void validate() const {
    dynid.validate();
    smooth.validate();
    reset.validate();
    if (patch_size < 1) throw ConfigError("pipeline.patch_size", "patch_size >= 1");
  }

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Everything the runner emits for one frame. For a reset frame this is the
/// pre-reset decoding; the post-reset copy only anchors the alignment.
struct FrameRecord {
  std::size_t frame_index = 0;
  double timestamp = 0.0;
  RigidPose raw_pose;  // backbone pose before correction and smoothing
  RigidPose pose;      // emitted pose
  FramePrediction prediction;  // depth and pose after the cumulative correction
  double sc = 0.0;
  double accel = 0.0;
  double beta = 1.0;
  double alpha_mean = 1.0;
  double alpha_min = 1.0;
  double ema_mean = 1.0;
  double ema_min = 1.0;
  bool gated = false;
  bool warmup = false;
  bool reset = false;
  std::optional<dynid::PixelDiscrepancy> discrepancy;
  std::optional<Grid<double>> pixel_staticness;
};

struct FrameFailure {
  std::size_t frame_index = 0;
  std::string message;
};

struct RunSummary {
  std::size_t frames = 0;
  std::size_t resets = 0;
  std::size_t degenerate_corrections = 0;
  std::vector<FrameFailure> failures;

  bool ok() const noexcept { return failures.empty(); }
};

/// Receives the run's output as it is produced.
class FrameSink {
 public:
  virtual ~FrameSink() = default;
  virtual void on_frame(const FrameRecord& record) = 0;
  virtual void on_reset(const align::SegmentCorrection& /*correction*/, bool /*applied*/) {}
  virtual void on_failure(const FrameFailure& /*failure*/) {}
  virtual void finish(const RunSummary& /*summary*/) {}
};

/// Keeps every record; for tests and the in-process ablation harness.
class MemorySink final : public FrameSink {
 public:
  std::vector<FrameRecord> frames;
  std::vector<align::SegmentCorrection> corrections;
  std::vector<FrameFailure> failures;
  std::optional<RunSummary> summary;
  bool keep_maps = true;

  void on_frame(const FrameRecord& record) override {
    frames.push_back(record);
    if (!keep_maps) {
      frames.back().discrepancy.reset();
      frames.back().pixel_staticness.reset();
      frames.back().prediction.state_delta.reset();
      frames.back().prediction.attention.reset();
    }
  }
  void on_reset(const align::SegmentCorrection& c, bool /*applied*/) override { corrections.push_back(c); }
  void on_failure(const FrameFailure& f) override { failures.push_back(f); }
  void finish(const RunSummary& s) override { summary = s; }
};

/// Sequential single-session runner. Retains only the state, the staticness EMA, the
/// smoother memory, the cumulative correction and the current frame's buffers.
class StreamingRunner {
 public:
  explicit StreamingRunner(PipelineConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const PipelineConfig& config() const noexcept { return cfg_; }

  RunSummary run(Backbone& backbone, FrameSink& sink) {
    const Intrinsics& intr = backbone.intrinsics();
    const PatchGrid patches(intr.width, intr.height, cfg_.patch_size);
    const std::size_t count = backbone.frame_count();

    RunSummary summary;
    if (count == 0) {
      sink.finish(summary);
      return summary;
    }
    StateVector state = backbone.initial_state(backbone.frame(0));
    dynid::StaticnessWeights weights = dynid::StaticnessWeights::initial(static_cast<std::size_t>(state.tokens.rows()));
    smooth::SmootherState smoother;
    align::SegmentAligner aligner;
    RigidPose previous_raw = RigidPose::identity();

    for (std::size_t t = 0; t < count; ++t) {
      try {
        const FrameHandle frame = backbone.frame(t);
        const RayMapTensor raymap_in = build_raymap(intr, previous_raw);
        FramePrediction main = backbone.decode_main(frame, raymap_in, state,
                                                    weights.pixel_map.empty() ? nullptr : &weights.pixel_map);
        if (!main.pose || !main.state_delta) throw Error("backbone returned no pose or state delta");

        FrameRecord rec;
        rec.frame_index = t;
        rec.timestamp = frame.timestamp;
        rec.raw_pose = *main.pose;
        rec.sc = smooth::state_change_signal(*main.state_delta);
        rec.warmup = t < static_cast<std::size_t>(cfg_.dynid.warmup_frames);

        StateVector next;
        if (cfg_.enable_r) {
          const RayMapTensor raymap_pred = raymap_from_predicted_pose(*main.pose, intr);
          const FramePrediction ray = backbone.decode_raymap_only(raymap_pred, state);
          auto step = dynid::step(main, ray, state, weights, cfg_.dynid, patches, rec.warmup);
          next = std::move(step.state);
          weights = std::move(step.weights);
          rec.gated = !rec.warmup;
          summarize(weights, rec);
          rec.discrepancy = std::move(step.maps.pixel);
          rec.pixel_staticness = weights.pixel_map;
        } else {
          next = apply_state_update(state, *main.state_delta,
                                    std::vector<double>(static_cast<std::size_t>(state.tokens.rows()), 1.0));
        }

        rec.prediction = aligner.correct(main);
        rec.pose = *rec.prediction.pose;
        if (cfg_.enable_s) {
          const auto s = smooth::smooth_step(rec.pose, rec.sc, smoother, cfg_.smooth);
          smoother = s.state;
          rec.pose = s.pose;
          rec.accel = s.accel;
          rec.beta = s.beta;
        }

        state = std::move(next);
        previous_raw = *main.pose;

        if (cfg_.reset.is_reset_frame(t, count)) {
          rec.reset = true;
          state = backbone.initial_state(frame);
          const FramePrediction post = backbone.decode_main(frame, build_raymap(intr, previous_raw), state);
          if (!post.pose) throw Error("backbone returned no pose after reset");
          ++summary.resets;
          if (cfg_.enable_m) {
            const bool weighted = cfg_.enable_r && !weights.pixel_map.empty();
            const auto correction =
                weighted ? align::estimate_reset_correction(main, post, weights.pixel_map, intr, t)
                         : align::estimate_reset_correction(main, post, intr, t);
            if (correction.degenerate) ++summary.degenerate_corrections;
            aligner.push(correction);
            sink.on_reset(correction, !correction.degenerate);
          }
          previous_raw = *post.pose;
        }

        sink.on_frame(rec);
        ++summary.frames;
      } catch (const std::exception& e) {
        FrameFailure f{t, e.what()};
        sink.on_failure(f);
        summary.failures.push_back(std::move(f));
      }
    }
    sink.finish(summary);
    return summary;
  }

 private:
  static void summarize(const dynid::StaticnessWeights& w, FrameRecord& rec) {
    auto mean_of = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? 1.0 : s / static_cast<double>(v.size());
    };
    auto min_of = [](const std::vector<double>& v) { return v.empty() ? 1.0 : *std::min_element(v.begin(), v.end()); };
    rec.alpha_mean = mean_of(w.current);
    rec.alpha_min = min_of(w.current);
    rec.ema_mean = mean_of(w.ema);
    rec.ema_min = min_of(w.ema);
  }

  PipelineConfig cfg_;
};

}  // namespace raymap3r
