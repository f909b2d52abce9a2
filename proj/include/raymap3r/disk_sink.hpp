#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "raymap3r/align.hpp"
#include "raymap3r/bundle.hpp"
#include "raymap3r/eval.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/io.hpp"
#include "raymap3r/pipeline.hpp"

// Run directory layout:
//   trajectory.txt    emitted poses (TUM)
//   depth.txt depth/  predicted depth PNGs
//   dynmap.txt dynmap/  discrepancy PNGs (frames processed with R)
//   frames.csv        per-frame signals
//   corrections.csv   one row per reset
//   cloud.ply         accumulated world points
//   report.json       per-frame signals, corrections, summary and optional metrics
namespace raymap3r::io {

struct DiskSinkOptions {
  bool save_depth = true;
  bool save_dynmap = true;
  bool save_cloud = true;
  int cloud_stride = 8;
  double depth_scale = kDefaultDepthScale;
};

inline nlohmann::ordered_json to_json(const eval::MetricsReport& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
  };
  put("ate_rmse", m.ate_rmse);
  put("rpe_trans", m.rpe_trans);
  put("rpe_rot_deg", m.rpe_rot);
  put("abs_rel", m.abs_rel);
  put("delta_1_25", m.delta_125);
  put("accuracy", m.accuracy);
  put("completion", m.completion);
  put("normal_consistency", m.normal_consistency);
  put("chamfer", m.chamfer);
  put("auc", m.auc);
  put("iou", m.iou);
  put("disc", m.disc);
  put("spearman_rho", m.spearman_rho);
  return j;
}

/// Streams a run to disk. Memory use does not grow with the number of frames.
class DiskSink final : public FrameSink {
 public:
  DiskSink(fs::path dir, Intrinsics intrinsics, DiskSinkOptions opt = {}, nlohmann::ordered_json run_info = {})
      : dir_(std::move(dir)), intr_(intrinsics), opt_(opt), info_(std::move(run_info)) {
    fs::create_directories(dir_);
    traj_ = detail::open_out(dir_ / "trajectory.txt");
    traj_ << "# timestamp tx ty tz qx qy qz qw\n";
    frames_csv_ = detail::open_out(dir_ / "frames.csv");
    frames_csv_ << "frame,timestamp,sc,accel,beta,alpha_mean,alpha_min,ema_mean,ema_min,gated,warmup,reset\n";
    corrections_csv_ = detail::open_out(dir_ / "corrections.csv");
    corrections_csv_ << "reset_frame,applied,degenerate,correspondences,residual,scale,qx,qy,qz,qw,tx,ty,tz\n";
    rows_ = detail::open_out(rows_path(), std::ios::out | std::ios::trunc);
    if (opt_.save_depth) {
      fs::create_directories(dir_ / "depth");
      depth_list_ = detail::open_out(dir_ / "depth.txt");
      detail::write_list_header(depth_list_, "depth");
    }
    if (opt_.save_dynmap) {
      fs::create_directories(dir_ / "dynmap");
      dynmap_list_ = detail::open_out(dir_ / "dynmap.txt");
      detail::write_list_header(dynmap_list_, "dynmap");
    }
    if (opt_.save_cloud) cloud_.emplace(dir_ / "cloud.ply");
  }

  ~DiskSink() override {
    std::error_code ec;
    if (rows_.is_open()) rows_.close();
    fs::remove(rows_path(), ec);
  }

  void on_frame(const FrameRecord& r) override {
    traj_ << trajectory_line(r.timestamp, r.pose) << '\n';
    const std::string name = frame_file(r.frame_index);
    char line[512];
    std::snprintf(line, sizeof line, "%zu,%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d,%d\n", r.frame_index, r.timestamp,
                  r.sc, r.accel, r.beta, r.alpha_mean, r.alpha_min, r.ema_mean, r.ema_min, r.gated ? 1 : 0,
                  r.warmup ? 1 : 0, r.reset ? 1 : 0);
    frames_csv_ << line;

    nlohmann::ordered_json row;
    row["frame"] = r.frame_index;
    row["timestamp"] = r.timestamp;
    row["sc"] = r.sc;
    row["accel"] = r.accel;
    row["beta"] = r.beta;
    row["alpha_mean"] = r.alpha_mean;
    row["alpha_min"] = r.alpha_min;
    row["ema_mean"] = r.ema_mean;
    row["ema_min"] = r.ema_min;
    row["gated"] = r.gated;
    row["warmup"] = r.warmup;
    row["reset"] = r.reset;
    rows_ << row.dump() << '\n';

    if (opt_.save_depth) {
      write_depth_png(r.prediction.depth, dir_ / "depth" / name, opt_.depth_scale, &warnings_);
      depth_list_ << detail::list_line(r.timestamp, "depth/" + name);
    }
    if (opt_.save_dynmap && r.discrepancy) {
      write_delta_png(r.discrepancy->delta, r.discrepancy->included, dir_ / "dynmap" / name);
      dynmap_list_ << detail::list_line(r.timestamp, "dynmap/" + name);
    }
    if (cloud_) {
      const auto& d = r.prediction.depth;
      for (int y = 0; y < d.height(); y += opt_.cloud_stride) {
        for (int x = 0; x < d.width(); x += opt_.cloud_stride) {
          if (d.is_valid(x, y)) cloud_->add(unproject_pixel(x, y, d.values(x, y), intr_, r.pose));
        }
      }
    }
    if (warnings_.size() > kMaxWarnings) warnings_.resize(kMaxWarnings);
  }

  void on_reset(const align::SegmentCorrection& c, bool applied) override {
    Eigen::Quaterniond q(c.transform.rotation);
    q.normalize();
    char line[512];
    std::snprintf(line, sizeof line, "%zu,%d,%d,%zu,%.9g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  c.reset_frame, applied ? 1 : 0, c.degenerate ? 1 : 0, c.correspondences, c.residual,
                  c.transform.scale, q.x(), q.y(), q.z(), q.w(), c.transform.translation.x(),
                  c.transform.translation.y(), c.transform.translation.z());
    corrections_csv_ << line;
    ++correction_count_;
  }

  void on_failure(const FrameFailure& f) override {
    if (failures_.size() < kMaxFailures) failures_.push_back({{"frame", f.frame_index}, {"message", f.message}});
    ++failure_count_;
  }

  void finish(const RunSummary& s) override {
    summary_ = s;
    detail::finish_write(traj_, dir_ / "trajectory.txt");
    traj_.close();
    detail::finish_write(frames_csv_, dir_ / "frames.csv");
    frames_csv_.close();
    detail::finish_write(corrections_csv_, dir_ / "corrections.csv");
    corrections_csv_.close();
    detail::finish_write(rows_, rows_path());
    rows_.close();
    if (opt_.save_depth) {
      detail::finish_write(depth_list_, dir_ / "depth.txt");
      depth_list_.close();
    }
    if (opt_.save_dynmap) {
      detail::finish_write(dynmap_list_, dir_ / "dynmap.txt");
      dynmap_list_.close();
    }
    if (cloud_) cloud_->close();
  }

  /// Assembles report.json; call after `finish`. Contains nothing run-time dependent.
  void write_report(const std::optional<eval::MetricsReport>& metrics = std::nullopt) {
    if (!summary_) throw Error("DiskSink::write_report: run not finished");
    const fs::path path = dir_ / "report.json";
    auto out = detail::open_out(path, std::ios::out | std::ios::trunc);
    nlohmann::ordered_json head = info_.is_object() ? info_ : nlohmann::ordered_json::object();
    out << "{\n  \"run\": " << head.dump() << ",\n";

    nlohmann::ordered_json summary;
    summary["frames"] = summary_->frames;
    summary["resets"] = summary_->resets;
    summary["corrections"] = correction_count_;
    summary["degenerate_corrections"] = summary_->degenerate_corrections;
    summary["failed_frames"] = failure_count_;
    summary["failures"] = failures_.is_null() ? nlohmann::ordered_json::array() : failures_;
    summary["warnings"] = warnings_;
    out << "  \"summary\": " << summary.dump() << ",\n";
    out << "  \"metrics\": " << (metrics ? to_json(*metrics).dump() : std::string("null")) << ",\n";

    out << "  \"frames\": [";
    {
      auto in = detail::open_in(rows_path());
      std::string line;
      bool first = true;
      while (std::getline(in, line)) {
        out << (first ? "\n    " : ",\n    ") << line;
        first = false;
      }
    }
    out << "\n  ]\n}\n";
    detail::finish_write(out, path);
    std::error_code ec;
    fs::remove(rows_path(), ec);
  }

  const std::optional<RunSummary>& summary() const noexcept { return summary_; }
  const fs::path& dir() const noexcept { return dir_; }

 private:
  static constexpr std::size_t kMaxFailures = 100;
  static constexpr std::size_t kMaxWarnings = 100;

  fs::path rows_path() const { return dir_ / "report.frames.tmp"; }

  fs::path dir_;
  Intrinsics intr_;
  DiskSinkOptions opt_;
  nlohmann::ordered_json info_;
  std::ofstream traj_, frames_csv_, corrections_csv_, rows_, depth_list_, dynmap_list_;
  std::optional<PlyStreamWriter> cloud_;
  nlohmann::ordered_json failures_ = nlohmann::ordered_json::array();
  std::vector<std::string> warnings_;
  std::size_t failure_count_ = 0;
  std::size_t correction_count_ = 0;
  std::optional<RunSummary> summary_;
};

}  // namespace raymap3r::io
