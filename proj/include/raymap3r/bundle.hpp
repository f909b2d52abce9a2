#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "raymap3r/config.hpp"
#include "raymap3r/error.hpp"
#include "raymap3r/eval.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/io.hpp"
#include "raymap3r/sim.hpp"

// On-disk sequences:
//   sequence.yaml    name, intrinsics, depth scale, optional dynamic ratio, list files
//   groundtruth.txt  TUM trajectory
//   depth.txt        "timestamp path" per frame, paths relative to the bundle
//   mask.txt         same for dynamic masks
//   config.yaml      simulator configuration when the bundle was generated
namespace raymap3r::io {

struct BundleFrame {
  double timestamp = 0.0;
  std::optional<fs::path> depth;  // absolute
  std::optional<fs::path> mask;

  friend bool operator==(const BundleFrame&, const BundleFrame&) = default;
};

struct SequenceBundle {
  fs::path root;
  std::string name;
  Intrinsics intrinsics;
  double depth_scale = kDefaultDepthScale;
  std::vector<BundleFrame> frames;
  std::optional<eval::Trajectory> groundtruth;
  std::optional<double> dynamic_ratio;

  void validate() const {
    if (frames.empty()) throw Error("bundle " + root.string() + ": needs at least one frame");
    intrinsics.validate();
    for (const auto& f : frames) {
      for (const auto* p : {&f.depth, &f.mask}) {
        if (*p && !fs::exists(**p)) throw IoError(p->value().string(), "referenced file does not exist");
      }
    }
  }
};

inline std::string frame_file(std::size_t index, const char* ext = ".png") {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu%s", index, ext);
  return buf;
}

namespace detail {

struct ListEntry {
  double timestamp;
  std::string path;
};

/// TUM-style association list: "timestamp path" lines, '#' comments.
inline std::vector<ListEntry> read_list_file(const fs::path& path) {
  auto in = open_in(path);
  std::vector<ListEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty() || tok.front().front() == '#') continue;
    if (tok.size() != 2) throw ParseError(path.string(), lineno, "expected 'timestamp path'");
    const auto t = parse_double(tok[0]);
    if (!t) throw ParseError(path.string(), lineno, "timestamp is not a finite number");
    if (!out.empty() && !(*t > out.back().timestamp)) throw ParseError(path.string(), lineno, "timestamps must strictly increase");
    out.push_back({*t, std::string(tok[1])});
  }
  return out;
}

inline void write_list_header(std::ostream& out, const char* what) { out << "# timestamp " << what << "\n"; }

inline std::string list_line(double timestamp, const std::string& rel) {
  return format("%.6f", timestamp) + " " + rel + "\n";
}

}  // namespace detail

inline SequenceBundle read_bundle(const fs::path& root) {
  const fs::path meta_path = root / "sequence.yaml";
  YAML::Node meta;
  try {
    meta = YAML::LoadFile(meta_path.string());
  } catch (const YAML::BadFile&) {
    throw IoError(meta_path.string(), "cannot open for reading");
  } catch (const YAML::ParserException& e) {
    throw ParseError(meta_path.string(), static_cast<std::size_t>(e.mark.line + 1), e.msg);
  }
  config::detail::Section s(meta, "sequence");
  SequenceBundle b;
  b.root = root;
  b.name = root.filename().string();
  s.get("name", b.name);
  s.get("depth_scale", b.depth_scale);
  double ratio = -1.0;
  s.get("dynamic_ratio", ratio);
  if (ratio >= 0.0) b.dynamic_ratio = ratio;
  {
    auto k = s.child("intrinsics");
    if (!k.present()) throw ConfigError("sequence.intrinsics", "is present");
    k.get("fx", b.intrinsics.fx);
    k.get("fy", b.intrinsics.fy);
    k.get("cx", b.intrinsics.cx);
    k.get("cy", b.intrinsics.cy);
    k.get("width", b.intrinsics.width);
    k.get("height", b.intrinsics.height);
    k.finish();
  }
  std::string gt, depth, mask;
  s.get("groundtruth", gt);
  s.get("depth", depth);
  s.get("mask", mask);
  s.finish();
  if (!(b.depth_scale > 0.0)) throw ConfigError("sequence.depth_scale", "depth_scale > 0");

  if (!gt.empty()) b.groundtruth = read_trajectory(root / gt);
  std::vector<detail::ListEntry> depths, masks;
  if (!depth.empty()) depths = detail::read_list_file(root / depth);
  if (!mask.empty()) masks = detail::read_list_file(root / mask);
  if (!depths.empty() && !masks.empty() && depths.size() != masks.size()) {
    throw Error("bundle " + root.string() + ": depth and mask lists differ in length");
  }
  const std::size_t n = std::max({depths.size(), masks.size(), b.groundtruth ? b.groundtruth->size() : std::size_t{0}});
  for (std::size_t i = 0; i < n; ++i) {
    BundleFrame f;
    if (i < depths.size()) {
      f.timestamp = depths[i].timestamp;
      f.depth = root / depths[i].path;
    } else if (i < masks.size()) {
      f.timestamp = masks[i].timestamp;
    } else {
      f.timestamp = b.groundtruth->timestamps[i];
    }
    if (i < masks.size()) {
      if (i < depths.size() && masks[i].timestamp != depths[i].timestamp) {
        throw Error("bundle " + root.string() + ": depth and mask timestamps differ at frame " + std::to_string(i));
      }
      f.mask = root / masks[i].path;
    }
    b.frames.push_back(std::move(f));
  }
  b.validate();
  return b;
}

/// Renders a simulated scene into a bundle. Identical specs give byte-identical files.
inline SequenceBundle export_simulation(const sim::SceneSpec& spec, const fs::path& root,
                                        const config::FullConfig& cfg = {}, Warnings* warnings = nullptr) {
  spec.validate();
  fs::create_directories(root / "depth");
  fs::create_directories(root / "mask");
  auto depth_list = detail::open_out(root / "depth.txt");
  auto mask_list = detail::open_out(root / "mask.txt");
  detail::write_list_header(depth_list, "depth");
  detail::write_list_header(mask_list, "mask");
  auto gt = detail::open_out(root / "groundtruth.txt");
  gt << "# timestamp tx ty tz qx qy qz qw\n";

  double ratio_sum = 0.0;
  for (std::size_t t = 0; t < spec.frame_count; ++t) {
    const auto frame = sim::raycast(spec, t, true);
    const double ts = spec.timestamp(t);
    const std::string name = frame_file(t);
    write_depth_png(frame.depth, root / "depth" / name, cfg.eval.depth_scale, warnings);
    write_mask_png(frame.dynamic_mask, root / "mask" / name);
    depth_list << detail::list_line(ts, "depth/" + name);
    mask_list << detail::list_line(ts, "mask/" + name);
    gt << trajectory_line(ts, frame.pose) << '\n';
    ratio_sum += sim::dynamic_ratio(frame);
  }
  detail::finish_write(depth_list, root / "depth.txt");
  detail::finish_write(mask_list, root / "mask.txt");
  detail::finish_write(gt, root / "groundtruth.txt");

  YAML::Emitter meta;
  meta << YAML::BeginMap;
  meta << YAML::Key << "name" << YAML::Value << spec.name;
  meta << YAML::Key << "depth_scale" << YAML::Value << config::detail::num(cfg.eval.depth_scale);
  meta << YAML::Key << "dynamic_ratio" << YAML::Value
       << config::detail::num(ratio_sum / static_cast<double>(spec.frame_count));
  meta << YAML::Key << "intrinsics" << YAML::Value << YAML::BeginMap;
  meta << YAML::Key << "fx" << YAML::Value << config::detail::num(spec.intrinsics.fx);
  meta << YAML::Key << "fy" << YAML::Value << config::detail::num(spec.intrinsics.fy);
  meta << YAML::Key << "cx" << YAML::Value << config::detail::num(spec.intrinsics.cx);
  meta << YAML::Key << "cy" << YAML::Value << config::detail::num(spec.intrinsics.cy);
  meta << YAML::Key << "width" << YAML::Value << spec.intrinsics.width;
  meta << YAML::Key << "height" << YAML::Value << spec.intrinsics.height;
  meta << YAML::EndMap;
  meta << YAML::Key << "groundtruth" << YAML::Value << "groundtruth.txt";
  meta << YAML::Key << "depth" << YAML::Value << "depth.txt";
  meta << YAML::Key << "mask" << YAML::Value << "mask.txt";
  meta << YAML::EndMap;
  {
    auto out = detail::open_out(root / "sequence.yaml");
    out << meta.c_str() << "\n";
    detail::finish_write(out, root / "sequence.yaml");
  }

  config::FullConfig with_scene = cfg;
  with_scene.scene = spec;
  config::save_config(with_scene, root / "config.yaml");
  return read_bundle(root);
}

}  // namespace raymap3r::io
