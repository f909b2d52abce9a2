#pragma once

#include <yaml-cpp/yaml.h>

#include <Eigen/Core>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "raymap3r/error.hpp"
#include "raymap3r/eval.hpp"
#include "raymap3r/io.hpp"
#include "raymap3r/pipeline.hpp"
#include "raymap3r/sim.hpp"

// YAML configuration covering the pipeline modules, evaluation flags and an optional
// simulator scene. Omitted keys keep their defaults; unknown keys are rejected.
namespace raymap3r::config {

struct EvalConfig {
  eval::Alignment alignment = eval::Alignment::sim3;
  eval::DepthProtocol depth_protocol = eval::DepthProtocol::per_sequence_median;
  int rpe_delta = 1;
  int cloud_stride = 8;
  bool dynmap_per_sequence_threshold = false;
  int dynmap_histogram_bins = 256;
  double depth_scale = io::kDefaultDepthScale;

  void validate() const {
    if (rpe_delta < 1) throw ConfigError("eval.rpe_delta", "rpe_delta >= 1");
    if (cloud_stride < 1) throw ConfigError("eval.cloud_stride", "cloud_stride >= 1");
    if (dynmap_histogram_bins < 2) throw ConfigError("eval.dynmap_histogram_bins", "dynmap_histogram_bins >= 2");
    if (!(depth_scale > 0.0)) throw ConfigError("eval.depth_scale", "depth_scale > 0");
  }

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct FullConfig {
  PipelineConfig pipeline;
  EvalConfig eval;
  std::optional<sim::SceneSpec> scene;  // absent: the command picks a generated room scene

  void validate() const {
    pipeline.validate();
    eval.validate();
    if (scene) scene->validate();
  }

  friend bool operator==(const FullConfig&, const FullConfig&) = default;
};

inline std::string_view to_string(eval::Alignment a) {
  switch (a) {
    case eval::Alignment::sim3: return "sim3";
    case eval::Alignment::se3: return "se3";
    case eval::Alignment::none: return "none";
  }
  return "sim3";
}

inline std::string_view to_string(eval::DepthProtocol p) {
  return p == eval::DepthProtocol::metric ? "metric" : "per_sequence_median";
}

inline std::string_view to_string(sim::MotionKind k) {
  switch (k) {
    case sim::MotionKind::linear: return "linear";
    case sim::MotionKind::circular: return "circular";
    case sim::MotionKind::oscillate: return "oscillate";
  }
  return "linear";
}

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---- reading ----

class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_.IsDefined() && !node_.IsNull() && !node_.IsMap()) throw ConfigError(path_, "is a mapping");
  }

  bool present() const { return node_.IsDefined() && !node_.IsNull(); }
  bool has(const std::string& key) const { return present() && node_[key].IsDefined(); }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return present() ? node_[key] : YAML::Node();
  }

  void get(const std::string& key, double& out) { scalar(key, out, "is a finite number"); }
  void get(const std::string& key, int& out) { scalar(key, out, "is an integer"); }
  void get(const std::string& key, bool& out) { scalar(key, out, "is true or false"); }
  void get(const std::string& key, std::string& out) { scalar(key, out, "is a string"); }
  void get(const std::string& key, std::uint64_t& out) { scalar(key, out, "is a non-negative integer"); }
  void get(const std::string& key, std::size_t& out, int) {
    std::uint64_t v = out;
    scalar(key, v, "is a non-negative integer");
    out = static_cast<std::size_t>(v);
  }

  void get(const std::string& key, Eigen::Vector3d& out) {
    const YAML::Node n = raw(key);
    if (!n.IsDefined() || n.IsNull()) return;
    out = vec3(n, key_path(key));
  }

  Section child(const std::string& key) { return Section(raw(key), key_path(key)); }

  /// Rejects keys that were never asked for.
  void finish() const {
    if (!present()) return;
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!seen_.count(k)) throw ConfigError(key_path(k), "known key");
    }
  }

  static Eigen::Vector3d vec3(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence() || n.size() != 3) throw ConfigError(path, "is a list of 3 numbers");
    Eigen::Vector3d v;
    for (int i = 0; i < 3; ++i) v[i] = number(n[static_cast<std::size_t>(i)], path);
    return v;
  }

  static Eigen::Matrix3d mat3(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence() || n.size() != 9) throw ConfigError(path, "is a list of 9 numbers (row-major)");
    Eigen::Matrix3d m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = number(n[static_cast<std::size_t>(i)], path);
    return m;
  }

  static double number(const YAML::Node& n, const std::string& path) {
    try {
      const double v = n.as<double>();
      if (!std::isfinite(v)) throw ConfigError(path, "is a finite number");
      return v;
    } catch (const YAML::Exception&) {
      throw ConfigError(path, "is a finite number");
    }
  }

  const YAML::Node& node() const { return node_; }

 private:
  template <class T>
  void scalar(const std::string& key, T& out, const char* constraint) {
    const YAML::Node n = raw(key);
    if (!n.IsDefined() || n.IsNull()) return;
    if (!n.IsScalar()) throw ConfigError(key_path(key), constraint);
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(key_path(key), constraint);
    }
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(out)) throw ConfigError(key_path(key), constraint);
    }
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline sim::Primitive read_primitive(const YAML::Node& n, const std::string& path) {
  Section s(n, path);
  std::string type;
  s.get("type", type);
  sim::Primitive out;
  if (type == "plane") {
    sim::Plane p;
    s.get("normal", p.normal);
    s.get("offset", p.offset);
    out = p;
  } else if (type == "sphere") {
    sim::Sphere p;
    s.get("center", p.center);
    s.get("radius", p.radius);
    if (!(p.radius > 0.0)) throw ConfigError(path + ".radius", "radius > 0");
    out = p;
  } else if (type == "box") {
    sim::Box p;
    s.get("min", p.min);
    s.get("max", p.max);
    if (!(p.min.array() <= p.max.array()).all()) throw ConfigError(path + ".max", "min <= max");
    out = p;
  } else {
    throw ConfigError(path + ".type", "one of plane, sphere, box");
  }
  s.finish();
  return out;
}

inline SimTransform read_sim_transform(const YAML::Node& n, const std::string& path) {
  Section s(n, path);
  SimTransform g;
  s.get("scale", g.scale);
  const YAML::Node r = s.raw("rotation");
  if (r.IsDefined() && !r.IsNull()) g.rotation = Section::mat3(r, path + ".rotation");
  s.get("translation", g.translation);
  s.finish();
  if (!(g.scale > 0.0)) throw ConfigError(path + ".scale", "scale > 0");
  return g;
}

inline RigidPose read_pose(const YAML::Node& n, const std::string& path) {
  Section s(n, path);
  RigidPose p;
  const YAML::Node r = s.raw("rotation");
  if (r.IsDefined() && !r.IsNull()) p.rotation = Section::mat3(r, path + ".rotation");
  s.get("translation", p.translation);
  s.finish();
  if (!p.is_valid(1e-6)) throw ConfigError(path + ".rotation", "rotation is orthonormal with determinant 1");
  return p;
}

template <class F>
void read_list(Section& parent, const std::string& key, F&& each) {
  const YAML::Node n = parent.raw(key);
  if (!n.IsDefined() || n.IsNull()) return;
  const std::string path = parent.key_path(key);
  if (!n.IsSequence()) throw ConfigError(path, "is a list");
  for (std::size_t i = 0; i < n.size(); ++i) each(n[i], path + "[" + std::to_string(i) + "]");
}

inline sim::SceneSpec read_scene(Section s) {
  sim::SceneSpec sc;
  s.get("name", sc.name);
  s.get("seed", sc.seed);
  s.get("frame_count", sc.frame_count, 0);
  s.get("frame_rate", sc.frame_rate);
  {
    auto k = s.child("intrinsics");
    k.get("fx", sc.intrinsics.fx);
    k.get("fy", sc.intrinsics.fy);
    k.get("cx", sc.intrinsics.cx);
    k.get("cy", sc.intrinsics.cy);
    k.get("width", sc.intrinsics.width);
    k.get("height", sc.intrinsics.height);
    k.finish();
    try {
      sc.intrinsics.validate();
    } catch (const Error& e) {
      throw ConfigError(s.key_path("intrinsics"), e.what());
    }
  }
  {
    auto n = s.child("noise");
    n.get("sigma_main", sc.noise.sigma_main);
    n.get("sigma_ray", sc.noise.sigma_ray);
    n.get("pose_translation_sigma", sc.noise.pose_translation_sigma);
    n.get("pose_rotation_sigma_deg", sc.noise.pose_rotation_sigma_deg);
    n.get("burst_probability", sc.noise.burst_probability);
    n.get("burst_length", sc.noise.burst_length);
    n.get("burst_gain", sc.noise.burst_gain);
    n.get("burst_state_sigma", sc.noise.burst_state_sigma);
    n.get("memory_coupling", sc.noise.memory_coupling);
    n.finish();
  }
  {
    auto m = s.child("memory");
    m.get("state_tokens", sc.memory.state_tokens);
    m.get("relaxation", sc.memory.relaxation);
    m.get("attention_sigma_patches", sc.memory.attention_sigma_patches);
    m.finish();
  }
  {
    auto j = s.child("reset_jitter");
    j.get("scale_log_sigma", sc.reset_jitter.scale_log_sigma);
    j.get("rotation_deg", sc.reset_jitter.rotation_deg);
    j.get("translation_sigma", sc.reset_jitter.translation_sigma);
    read_list(j, "scripted", [&](const YAML::Node& n, const std::string& p) {
      sc.reset_jitter.scripted.push_back(read_sim_transform(n, p));
    });
    j.finish();
  }
  {
    auto c = s.child("camera");
    c.get("start", sc.camera.start);
    c.get("velocity", sc.camera.velocity);
    c.get("sway_amplitude", sc.camera.sway_amplitude);
    c.get("sway_rate", sc.camera.sway_rate);
    c.get("look_at", sc.camera.look_at);
    c.get("look_sway", sc.camera.look_sway);
    read_list(c, "dashes", [&](const YAML::Node& n, const std::string& p) {
      Section d(n, p);
      sim::Dash dash;
      d.get("start", dash.start);
      d.get("duration", dash.duration);
      d.get("displacement", dash.displacement);
      d.finish();
      if (!(dash.duration > 0.0)) throw ConfigError(p + ".duration", "duration > 0");
      sc.camera.dashes.push_back(dash);
    });
    c.finish();
  }
  read_list(s, "statics", [&](const YAML::Node& n, const std::string& p) { sc.statics.push_back(read_primitive(n, p)); });
  read_list(s, "dynamics", [&](const YAML::Node& n, const std::string& p) {
    Section d(n, p);
    sim::DynamicObject obj;
    obj.shape = read_primitive(d.raw("shape"), p + ".shape");
    auto m = d.child("motion");
    std::string kind = "linear";
    m.get("kind", kind);
    if (kind == "linear") obj.motion.kind = sim::MotionKind::linear;
    else if (kind == "circular") obj.motion.kind = sim::MotionKind::circular;
    else if (kind == "oscillate") obj.motion.kind = sim::MotionKind::oscillate;
    else throw ConfigError(p + ".motion.kind", "one of linear, circular, oscillate");
    m.get("origin", obj.motion.origin);
    m.get("axis_a", obj.motion.axis_a);
    m.get("axis_b", obj.motion.axis_b);
    m.get("rate", obj.motion.rate);
    m.get("phase", obj.motion.phase);
    m.finish();
    d.finish();
    sc.dynamics.push_back(obj);
  });
  read_list(s, "poses", [&](const YAML::Node& n, const std::string& p) { sc.poses.push_back(read_pose(n, p)); });
  s.finish();
  return sc;
}

// ---- writing ----

inline YAML::Emitter& seq3(YAML::Emitter& out, const Eigen::Vector3d& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (int i = 0; i < 3; ++i) out << num(v[i]);
  return out << YAML::EndSeq;
}

inline YAML::Emitter& seq9(YAML::Emitter& out, const Eigen::Matrix3d& m) {
  out << YAML::Flow << YAML::BeginSeq;
  for (int i = 0; i < 9; ++i) out << num(m(i / 3, i % 3));
  return out << YAML::EndSeq;
}

inline void kv(YAML::Emitter& out, const char* key, double v, double def) {
  out << YAML::Key << key << YAML::Value << num(v) << YAML::Comment("default: " + num(def));
}
inline void kv(YAML::Emitter& out, const char* key, int v, int def) {
  out << YAML::Key << key << YAML::Value << v << YAML::Comment("default: " + std::to_string(def));
}
inline void kv(YAML::Emitter& out, const char* key, bool v, bool def) {
  out << YAML::Key << key << YAML::Value << v << YAML::Comment(std::string("default: ") + (def ? "true" : "false"));
}
inline void kv(YAML::Emitter& out, const char* key, std::string_view v, std::string_view def, const char* choices) {
  out << YAML::Key << key << YAML::Value << std::string(v)
      << YAML::Comment("default: " + std::string(def) + "; one of " + choices);
}
inline void kv3(YAML::Emitter& out, const char* key, const Eigen::Vector3d& v, const Eigen::Vector3d& def) {
  out << YAML::Key << key << YAML::Value;
  seq3(out, v);
  out << YAML::Comment("default: [" + num(def.x()) + ", " + num(def.y()) + ", " + num(def.z()) + "]");
}

inline void write_primitive(YAML::Emitter& out, const sim::Primitive& p) {
  out << YAML::Flow << YAML::BeginMap;
  if (const auto* a = std::get_if<sim::Plane>(&p)) {
    out << YAML::Key << "type" << YAML::Value << "plane" << YAML::Key << "normal" << YAML::Value;
    seq3(out, a->normal) << YAML::Key << "offset" << YAML::Value << num(a->offset);
  } else if (const auto* b = std::get_if<sim::Sphere>(&p)) {
    out << YAML::Key << "type" << YAML::Value << "sphere" << YAML::Key << "center" << YAML::Value;
    seq3(out, b->center) << YAML::Key << "radius" << YAML::Value << num(b->radius);
  } else if (const auto* c = std::get_if<sim::Box>(&p)) {
    out << YAML::Key << "type" << YAML::Value << "box" << YAML::Key << "min" << YAML::Value;
    seq3(out, c->min) << YAML::Key << "max" << YAML::Value;
    seq3(out, c->max);
  }
  out << YAML::EndMap;
}

inline void write_scene(YAML::Emitter& out, const sim::SceneSpec& sc) {
  const sim::SceneSpec d;
  out << YAML::Key << "scene" << YAML::Comment("simulator scene; omit to use a generated room") << YAML::Value
      << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << sc.name << YAML::Comment("default: " + d.name);
  out << YAML::Key << "seed" << YAML::Value << sc.seed << YAML::Comment("default: 0");
  out << YAML::Key << "frame_count" << YAML::Value << sc.frame_count
      << YAML::Comment("default: " + std::to_string(d.frame_count));
  kv(out, "frame_rate", sc.frame_rate, d.frame_rate);

  out << YAML::Key << "intrinsics" << YAML::Value << YAML::BeginMap;
  kv(out, "fx", sc.intrinsics.fx, d.intrinsics.fx);
  kv(out, "fy", sc.intrinsics.fy, d.intrinsics.fy);
  kv(out, "cx", sc.intrinsics.cx, d.intrinsics.cx);
  kv(out, "cy", sc.intrinsics.cy, d.intrinsics.cy);
  kv(out, "width", sc.intrinsics.width, d.intrinsics.width);
  kv(out, "height", sc.intrinsics.height, d.intrinsics.height);
  out << YAML::EndMap;

  out << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
  kv(out, "sigma_main", sc.noise.sigma_main, d.noise.sigma_main);
  kv(out, "sigma_ray", sc.noise.sigma_ray, d.noise.sigma_ray);
  kv(out, "pose_translation_sigma", sc.noise.pose_translation_sigma, d.noise.pose_translation_sigma);
  kv(out, "pose_rotation_sigma_deg", sc.noise.pose_rotation_sigma_deg, d.noise.pose_rotation_sigma_deg);
  kv(out, "burst_probability", sc.noise.burst_probability, d.noise.burst_probability);
  kv(out, "burst_length", sc.noise.burst_length, d.noise.burst_length);
  kv(out, "burst_gain", sc.noise.burst_gain, d.noise.burst_gain);
  kv(out, "burst_state_sigma", sc.noise.burst_state_sigma, d.noise.burst_state_sigma);
  kv(out, "memory_coupling", sc.noise.memory_coupling, d.noise.memory_coupling);
  out << YAML::EndMap;

  out << YAML::Key << "memory" << YAML::Value << YAML::BeginMap;
  kv(out, "state_tokens", sc.memory.state_tokens, d.memory.state_tokens);
  kv(out, "relaxation", sc.memory.relaxation, d.memory.relaxation);
  kv(out, "attention_sigma_patches", sc.memory.attention_sigma_patches, d.memory.attention_sigma_patches);
  out << YAML::EndMap;

  out << YAML::Key << "reset_jitter" << YAML::Value << YAML::BeginMap;
  kv(out, "scale_log_sigma", sc.reset_jitter.scale_log_sigma, d.reset_jitter.scale_log_sigma);
  kv(out, "rotation_deg", sc.reset_jitter.rotation_deg, d.reset_jitter.rotation_deg);
  kv(out, "translation_sigma", sc.reset_jitter.translation_sigma, d.reset_jitter.translation_sigma);
  out << YAML::Key << "scripted" << YAML::Value << YAML::BeginSeq;
  for (const auto& g : sc.reset_jitter.scripted) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "scale" << YAML::Value << num(g.scale) << YAML::Key
        << "rotation" << YAML::Value;
    seq9(out, g.rotation) << YAML::Key << "translation" << YAML::Value;
    seq3(out, g.translation) << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "camera" << YAML::Value << YAML::BeginMap;
  kv3(out, "start", sc.camera.start, d.camera.start);
  kv3(out, "velocity", sc.camera.velocity, d.camera.velocity);
  kv3(out, "sway_amplitude", sc.camera.sway_amplitude, d.camera.sway_amplitude);
  kv(out, "sway_rate", sc.camera.sway_rate, d.camera.sway_rate);
  kv3(out, "look_at", sc.camera.look_at, d.camera.look_at);
  kv3(out, "look_sway", sc.camera.look_sway, d.camera.look_sway);
  out << YAML::Key << "dashes" << YAML::Value << YAML::BeginSeq;
  for (const auto& dash : sc.camera.dashes) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "start" << YAML::Value << num(dash.start) << YAML::Key
        << "duration" << YAML::Value << num(dash.duration) << YAML::Key << "displacement" << YAML::Value;
    seq3(out, dash.displacement) << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "statics" << YAML::Value << YAML::BeginSeq;
  for (const auto& p : sc.statics) write_primitive(out, p);
  out << YAML::EndSeq;

  out << YAML::Key << "dynamics" << YAML::Value << YAML::BeginSeq;
  for (const auto& obj : sc.dynamics) {
    out << YAML::BeginMap << YAML::Key << "shape" << YAML::Value;
    write_primitive(out, obj.shape);
    out << YAML::Key << "motion" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "kind" << YAML::Value
        << std::string(to_string(obj.motion.kind)) << YAML::Key << "origin" << YAML::Value;
    seq3(out, obj.motion.origin) << YAML::Key << "axis_a" << YAML::Value;
    seq3(out, obj.motion.axis_a) << YAML::Key << "axis_b" << YAML::Value;
    seq3(out, obj.motion.axis_b) << YAML::Key << "rate" << YAML::Value << num(obj.motion.rate) << YAML::Key << "phase"
                                 << YAML::Value << num(obj.motion.phase) << YAML::EndMap;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "poses" << YAML::Comment("explicit world-to-camera poses; overrides camera when nonempty")
      << YAML::Value << YAML::BeginSeq;
  for (const auto& p : sc.poses) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "rotation" << YAML::Value;
    seq9(out, p.rotation) << YAML::Key << "translation" << YAML::Value;
    seq3(out, p.translation) << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
}

}  // namespace detail

/// Parses YAML text. An empty document yields the defaults.
inline FullConfig parse_config(const std::string& text, const std::string& name = "<config>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(name, static_cast<std::size_t>(e.mark.line + 1), e.msg);
  }
  FullConfig cfg;
  if (!root.IsDefined() || root.IsNull()) {
    cfg.validate();
    return cfg;
  }
  if (!root.IsMap()) throw ConfigError("<root>", "is a mapping");
  detail::Section top(root, "");

  {
    auto p = top.child("pipeline");
    p.get("enable_r", cfg.pipeline.enable_r);
    p.get("enable_m", cfg.pipeline.enable_m);
    p.get("enable_s", cfg.pipeline.enable_s);
    p.get("patch_size", cfg.pipeline.patch_size);
    p.finish();
  }
  {
    auto d = top.child("dynid");
    d.get("gamma", cfg.pipeline.dynid.gamma);
    d.get("ema_momentum", cfg.pipeline.dynid.ema_momentum);
    d.get("warmup_frames", cfg.pipeline.dynid.warmup_frames);
    d.get("epsilon_depth", cfg.pipeline.dynid.epsilon_depth);
    d.get("iqr_floor", cfg.pipeline.dynid.iqr_floor);
    d.finish();
  }
  {
    auto s = top.child("smooth");
    s.get("lambda", cfg.pipeline.smooth.lambda);
    std::string mode(smooth::to_string(cfg.pipeline.smooth.mode));
    s.get("mode", mode);
    cfg.pipeline.smooth.mode = smooth::mode_from_string(mode);
    s.get("fixed_beta", cfg.pipeline.smooth.fixed_beta);
    s.finish();
  }
  {
    auto r = top.child("reset");
    r.get("enabled", cfg.pipeline.reset.enabled);
    r.get("period", cfg.pipeline.reset.period);
    r.finish();
  }
  {
    auto e = top.child("eval");
    std::string alignment(to_string(cfg.eval.alignment));
    e.get("alignment", alignment);
    if (alignment == "sim3") cfg.eval.alignment = eval::Alignment::sim3;
    else if (alignment == "se3") cfg.eval.alignment = eval::Alignment::se3;
    else if (alignment == "none") cfg.eval.alignment = eval::Alignment::none;
    else throw ConfigError("eval.alignment", "one of sim3, se3, none");
    std::string protocol(to_string(cfg.eval.depth_protocol));
    e.get("depth_protocol", protocol);
    if (protocol == "per_sequence_median") cfg.eval.depth_protocol = eval::DepthProtocol::per_sequence_median;
    else if (protocol == "metric") cfg.eval.depth_protocol = eval::DepthProtocol::metric;
    else throw ConfigError("eval.depth_protocol", "one of per_sequence_median, metric");
    e.get("rpe_delta", cfg.eval.rpe_delta);
    e.get("cloud_stride", cfg.eval.cloud_stride);
    e.get("dynmap_per_sequence_threshold", cfg.eval.dynmap_per_sequence_threshold);
    e.get("dynmap_histogram_bins", cfg.eval.dynmap_histogram_bins);
    e.get("depth_scale", cfg.eval.depth_scale);
    e.finish();
  }
  if (top.has("scene")) {
    auto s = top.child("scene");
    if (s.present()) cfg.scene = detail::read_scene(s);
  }
  top.finish();
  cfg.validate();
  return cfg;
}

inline FullConfig load_config(const std::filesystem::path& path) {
  auto in = io::detail::open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// YAML text of `cfg` with every default noted in a trailing comment.
inline std::string dump_config(const FullConfig& cfg) {
  const FullConfig d;
  YAML::Emitter out;
  out << YAML::Comment("raymap3r configuration; omitted keys take the defaults noted on each line");
  out << YAML::BeginMap;

  out << YAML::Key << "pipeline" << YAML::Value << YAML::BeginMap;
  detail::kv(out, "enable_r", cfg.pipeline.enable_r, d.pipeline.enable_r);
  detail::kv(out, "enable_m", cfg.pipeline.enable_m, d.pipeline.enable_m);
  detail::kv(out, "enable_s", cfg.pipeline.enable_s, d.pipeline.enable_s);
  detail::kv(out, "patch_size", cfg.pipeline.patch_size, d.pipeline.patch_size);
  out << YAML::EndMap;

  out << YAML::Key << "dynid" << YAML::Value << YAML::BeginMap;
  detail::kv(out, "gamma", cfg.pipeline.dynid.gamma, d.pipeline.dynid.gamma);
  detail::kv(out, "ema_momentum", cfg.pipeline.dynid.ema_momentum, d.pipeline.dynid.ema_momentum);
  detail::kv(out, "warmup_frames", cfg.pipeline.dynid.warmup_frames, d.pipeline.dynid.warmup_frames);
  detail::kv(out, "epsilon_depth", cfg.pipeline.dynid.epsilon_depth, d.pipeline.dynid.epsilon_depth);
  detail::kv(out, "iqr_floor", cfg.pipeline.dynid.iqr_floor, d.pipeline.dynid.iqr_floor);
  out << YAML::EndMap;

  out << YAML::Key << "smooth" << YAML::Value << YAML::BeginMap;
  detail::kv(out, "lambda", cfg.pipeline.smooth.lambda, d.pipeline.smooth.lambda);
  detail::kv(out, "mode", smooth::to_string(cfg.pipeline.smooth.mode), smooth::to_string(d.pipeline.smooth.mode),
             "full, fixed, accel_only, state_only, off");
  detail::kv(out, "fixed_beta", cfg.pipeline.smooth.fixed_beta, d.pipeline.smooth.fixed_beta);
  out << YAML::EndMap;

  out << YAML::Key << "reset" << YAML::Value << YAML::BeginMap;
  detail::kv(out, "enabled", cfg.pipeline.reset.enabled, d.pipeline.reset.enabled);
  detail::kv(out, "period", cfg.pipeline.reset.period, d.pipeline.reset.period);
  out << YAML::EndMap;

  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  detail::kv(out, "alignment", to_string(cfg.eval.alignment), to_string(d.eval.alignment), "sim3, se3, none");
  detail::kv(out, "depth_protocol", to_string(cfg.eval.depth_protocol), to_string(d.eval.depth_protocol),
             "per_sequence_median, metric");
  detail::kv(out, "rpe_delta", cfg.eval.rpe_delta, d.eval.rpe_delta);
  detail::kv(out, "cloud_stride", cfg.eval.cloud_stride, d.eval.cloud_stride);
  detail::kv(out, "dynmap_per_sequence_threshold", cfg.eval.dynmap_per_sequence_threshold,
             d.eval.dynmap_per_sequence_threshold);
  detail::kv(out, "dynmap_histogram_bins", cfg.eval.dynmap_histogram_bins, d.eval.dynmap_histogram_bins);
  detail::kv(out, "depth_scale", cfg.eval.depth_scale, d.eval.depth_scale);
  out << YAML::EndMap;

  if (cfg.scene) detail::write_scene(out, *cfg.scene);
  out << YAML::EndMap;
  if (!out.good()) throw Error("dump_config: " + out.GetLastError());
  return std::string(out.c_str()) + "\n";
}

inline void save_config(const FullConfig& cfg, const std::filesystem::path& path) {
  auto out = io::detail::open_out(path);
  out << dump_config(cfg);
  io::detail::finish_write(out, path);
}

}  // namespace raymap3r::config
