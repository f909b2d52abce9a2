#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "raymap3r/backbone.hpp"
#include "raymap3r/error.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/grid.hpp"
#include "raymap3r/raymap.hpp"

// Deterministic synthetic scenes and a mock dual-branch backbone.
//
// The main branch sees the full scene (static + dynamic primitives); the RayMap-only
// branch ray-casts the static primitives alone, which is the static bias by
// construction. Memory is a small token matrix that relaxes toward attention-pooled
// patch content; when it absorbs dynamic content its distance from the static scene
// ("contamination") inflates the main branch's depth and pose noise.
namespace raymap3r::sim {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Points x with normal . x = offset.
struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitY();
  double offset = 0.0;

  friend bool operator==(const Plane&, const Plane&) = default;
};

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;

  friend bool operator==(const Sphere&, const Sphere&) = default;
};

/// Axis-aligned box.
struct Box {
  Eigen::Vector3d min = -Eigen::Vector3d::Ones();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();

  friend bool operator==(const Box&, const Box&) = default;
};

using Primitive = std::variant<Plane, Sphere, Box>;

/// Nearest positive ray parameter of the hit, +inf when missed. `dir` is unit length.
inline double intersect(const Plane& p, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  const double denom = p.normal.dot(dir);
  if (std::abs(denom) < 1e-15) return kInf;
  const double t = (p.offset - p.normal.dot(origin)) / denom;
  return t > 0.0 ? t : kInf;
}

inline double intersect(const Sphere& s, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  const Eigen::Vector3d oc = origin - s.center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return kInf;
  const double root = std::sqrt(disc);
  const double t0 = -b - root;
  if (t0 > 0.0) return t0;
  const double t1 = -b + root;
  return t1 > 0.0 ? t1 : kInf;
}

inline double intersect(const Box& box, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  double t_near = -kInf, t_far = kInf;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return kInf;
      continue;
    }
    double t1 = (box.min[a] - origin[a]) / dir[a];
    double t2 = (box.max[a] - origin[a]) / dir[a];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return kInf;
  }
  if (t_near > 0.0) return t_near;
  return t_far > 0.0 ? t_far : kInf;
}

inline double intersect(const Primitive& prim, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  return std::visit([&](const auto& p) { return intersect(p, origin, dir); }, prim);
}

/// Translate a primitive by `offset`.
inline Primitive translated(const Primitive& prim, const Eigen::Vector3d& offset) {
  return std::visit(
      [&](const auto& p) -> Primitive {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Plane>) {
          return Plane{p.normal, p.offset + p.normal.dot(offset)};
        } else if constexpr (std::is_same_v<T, Sphere>) {
          return Sphere{p.center + offset, p.radius};
        } else {
          return Box{p.min + offset, p.max + offset};
        }
      },
      prim);
}

enum class MotionKind { linear, circular, oscillate };

/// Position of a moving primitive as a function of the frame index t:
///   linear:    origin + axis_a * t
///   circular:  origin + axis_a cos(rate t + phase) + axis_b sin(rate t + phase)
///   oscillate: origin + axis_a sin(rate t + phase)
struct Motion {
  MotionKind kind = MotionKind::linear;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_a = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_b = Eigen::Vector3d::Zero();
  double rate = 0.0;
  double phase = 0.0;

  Eigen::Vector3d position(double t) const {
    switch (kind) {
      case MotionKind::linear: return origin + axis_a * t;
      case MotionKind::circular:
        return origin + axis_a * std::cos(rate * t + phase) + axis_b * std::sin(rate * t + phase);
      case MotionKind::oscillate: return origin + axis_a * std::sin(rate * t + phase);
    }
    return origin;
  }

  friend bool operator==(const Motion&, const Motion&) = default;
};

/// A primitive modelled around the origin and carried along `motion`.
struct DynamicObject {
  Primitive shape = Sphere{};
  Motion motion;

  Primitive at(double t) const { return translated(shape, motion.position(t)); }

  friend bool operator==(const DynamicObject&, const DynamicObject&) = default;
};

/// A quick displacement of the camera, eased in and out over `duration` frames.
struct Dash {
  double start = 0.0;
  double duration = 5.0;
  Eigen::Vector3d displacement = Eigen::Vector3d::Zero();

  Eigen::Vector3d offset(double t) const {
    const double u = std::clamp((t - start) / duration, 0.0, 1.0);
    return displacement * (u * u * (3.0 - 2.0 * u));
  }

  friend bool operator==(const Dash&, const Dash&) = default;
};

/// Parametric camera path: drift, sway and occasional dashes. The camera looks at a
/// (swaying) target point with image y pointing down in world +y.
struct CameraPath {
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // meters per frame
  Eigen::Vector3d sway_amplitude = Eigen::Vector3d::Zero();
  double sway_rate = 0.05;  // radians per frame
  Eigen::Vector3d look_at = Eigen::Vector3d(0.0, 0.0, 5.0);
  Eigen::Vector3d look_sway = Eigen::Vector3d::Zero();
  std::vector<Dash> dashes;

  Eigen::Vector3d position(double t) const {
    const double w = sway_rate * t;
    Eigen::Vector3d p = start + velocity * t +
                        sway_amplitude.cwiseProduct(Eigen::Vector3d(std::sin(w), std::sin(0.7 * w + 1.0), std::sin(1.3 * w + 2.0)));
    for (const auto& d : dashes) p += d.offset(t);
    return p;
  }

  RigidPose pose(double t) const {
    const double w = sway_rate * t;
    const Eigen::Vector3d c = position(t);
    const Eigen::Vector3d target =
        look_at + look_sway.cwiseProduct(Eigen::Vector3d(std::sin(0.5 * w), std::sin(0.4 * w + 0.5), 0.0));
    const Eigen::Vector3d z = (target - c).normalized();
    const Eigen::Vector3d x = Eigen::Vector3d::UnitY().cross(z).normalized();
    const Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix3d c2w;
    c2w.col(0) = x;
    c2w.col(1) = y;
    c2w.col(2) = z;
    return RigidPose::from_camera_center(c2w, c);
  }

  friend bool operator==(const CameraPath&, const CameraPath&) = default;
};

/// Prediction noise. Depth noise is relative (multiplicative); pose noise is applied
/// to the camera center (meters) and as a random-axis rotation (degrees). During a
/// burst the pose noise is multiplied by `burst_gain` and the state delta receives
/// extra Gaussian energy `burst_state_sigma`. All main-branch noise is further scaled
/// by (1 + memory_coupling * contamination).
struct NoiseModel {
  double sigma_main = 0.0;
  double sigma_ray = 0.0;
  double pose_translation_sigma = 0.0;
  double pose_rotation_sigma_deg = 0.0;
  double burst_probability = 0.0;
  int burst_length = 1;
  double burst_gain = 1.0;
  double burst_state_sigma = 0.0;
  double memory_coupling = 0.0;

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

/// Memory geometry: token anchors on a uniform sqrt(N) x sqrt(N) grid, Gaussian
/// attention of width `attention_sigma_patches` patch widths, and relaxation rate of
/// the proposed update toward the pooled content.
struct MemoryModel {
  int state_tokens = 64;
  double relaxation = 0.1;
  double attention_sigma_patches = 2.0;

  friend bool operator==(const MemoryModel&, const MemoryModel&) = default;
};

/// Random Sim(3) drawn at every reset: log-normal scale, random-axis rotation,
/// Gaussian translation. `scripted` overrides the draw for the first resets.
struct ResetJitter {
  double scale_log_sigma = 0.0;
  double rotation_deg = 0.0;
  double translation_sigma = 0.0;
  std::vector<SimTransform> scripted;

  friend bool operator==(const ResetJitter&, const ResetJitter&) = default;
};

struct SceneSpec {
  std::string name = "scene";
  Intrinsics intrinsics{100.0, 100.0, 63.5, 47.5, 128, 96};
  std::size_t frame_count = 100;
  double frame_rate = 30.0;
  std::vector<Primitive> statics;
  std::vector<DynamicObject> dynamics;
  CameraPath camera;
  std::vector<RigidPose> poses;  // explicit per-frame trajectory; overrides `camera` when non-empty
  NoiseModel noise;
  MemoryModel memory;
  ResetJitter reset_jitter;
  std::uint64_t seed = 0;

  void validate() const {
    intrinsics.validate();
    if (frame_count < 1) throw ConfigError("scene.frame_count", "frame_count >= 1");
    if (!(frame_rate > 0.0)) throw ConfigError("scene.frame_rate", "frame_rate > 0");
    if (!poses.empty() && poses.size() != frame_count) {
      throw ConfigError("scene.poses", "pose count equals frame_count");
    }
    if (noise.sigma_main < 0.0 || noise.sigma_ray < 0.0) throw ConfigError("scene.noise.sigma", "sigma >= 0");
    if (noise.pose_translation_sigma < 0.0 || noise.pose_rotation_sigma_deg < 0.0) {
      throw ConfigError("scene.noise.pose", "pose noise >= 0");
    }
    if (!(noise.burst_probability >= 0.0 && noise.burst_probability <= 1.0)) {
      throw ConfigError("scene.noise.burst_probability", "0 <= burst_probability <= 1");
    }
    if (noise.burst_length < 1) throw ConfigError("scene.noise.burst_length", "burst_length >= 1");
    if (noise.memory_coupling < 0.0) throw ConfigError("scene.noise.memory_coupling", "memory_coupling >= 0");
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(memory.state_tokens))));
    if (memory.state_tokens < 1 || side * side != memory.state_tokens) {
      throw ConfigError("scene.memory.state_tokens", "state_tokens is a positive perfect square");
    }
    if (!(memory.relaxation > 0.0 && memory.relaxation <= 1.0)) {
      throw ConfigError("scene.memory.relaxation", "0 < relaxation <= 1");
    }
    if (!(memory.attention_sigma_patches > 0.0)) {
      throw ConfigError("scene.memory.attention_sigma_patches", "attention_sigma_patches > 0");
    }
  }

  RigidPose camera_pose(std::size_t frame) const {
    return poses.empty() ? camera.pose(static_cast<double>(frame)) : poses.at(frame);
  }
  double timestamp(std::size_t frame) const { return static_cast<double>(frame) / frame_rate; }

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Ground truth of one frame.
struct GroundTruthFrame {
  DepthMap depth;
  Grid<std::uint8_t> dynamic_mask;
  RigidPose pose;
  std::size_t frame_index = 0;
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x2545F4914F6CDD1DULL;
  for (auto p : parts) h = splitmix(h ^ p);
  return h;
}

inline std::uint64_t bits(double v) {
  std::uint64_t u;
  static_assert(sizeof(u) == sizeof(v));
  std::memcpy(&u, &v, sizeof(u));
  return u;
}

enum Stream : std::uint64_t { kMain = 1, kRay = 2, kBurst = 3, kReset = 4, kState = 5 };

inline double uniform01(std::uint64_t key) { return static_cast<double>(splitmix(key) >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Primitives split by type so the per-pixel loop avoids variant dispatch.
struct PrimitiveSet {
  std::vector<Plane> planes;
  std::vector<Sphere> spheres;
  std::vector<Box> boxes;

  void add(const Primitive& p) {
    if (const auto* a = std::get_if<Plane>(&p)) planes.push_back(*a);
    else if (const auto* b = std::get_if<Sphere>(&p)) spheres.push_back(*b);
    else boxes.push_back(std::get<Box>(p));
  }

  static PrimitiveSet of(std::span<const Primitive> prims) {
    PrimitiveSet set;
    for (const auto& p : prims) set.add(p);
    return set;
  }

  double nearest(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
    double t = kInf;
    for (const auto& p : planes) t = std::min(t, intersect(p, origin, dir));
    for (const auto& p : spheres) t = std::min(t, intersect(p, origin, dir));
    for (const auto& p : boxes) t = std::min(t, intersect(p, origin, dir));
    return t;
  }
};

/// Moving primitives positioned at a frame.
inline PrimitiveSet dynamic_primitives_at(const SceneSpec& spec, std::size_t frame) {
  PrimitiveSet out;
  for (const auto& d : spec.dynamics) out.add(d.at(static_cast<double>(frame)));
  return out;
}

/// Full-scene and static-only depth along the same rays, plus the dynamic mask.
struct DualDepth {
  DepthMap full;
  DepthMap static_only;
  Grid<std::uint8_t> dynamic_mask;
};

/// Camera-frame depth along the rays of `raymap` is t / |K^-1 (x, y, 1)|.
inline DualDepth cast_dual(const Intrinsics& k, const RayMapTensor& raymap, const PrimitiveSet& statics,
                           const PrimitiveSet& dynamics) {
  if (raymap.width() != k.width || raymap.height() != k.height) {
    throw ShapeError("cast_dual: raymap size does not match intrinsics");
  }
  DualDepth out{DepthMap(k.width, k.height), DepthMap(k.width, k.height), Grid<std::uint8_t>(k.width, k.height, 0)};
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Eigen::Vector3d& dir = raymap.directions(x, y);
      const double ts = statics.nearest(raymap.origin, dir);
      const double td = dynamics.nearest(raymap.origin, dir);
      const double norm = k.back_project(x, y).norm();
      if (std::isfinite(ts)) out.static_only.set(x, y, ts / norm);
      const double t = std::min(ts, td);
      if (!std::isfinite(t)) continue;
      out.full.set(x, y, t / norm);
      if (td < ts && out.full.is_valid(x, y)) out.dynamic_mask(x, y) = 1;
    }
  }
  return out;
}

/// Ground truth of `frame` from its true camera pose, with both depth variants.
inline DualDepth raycast_dual(const SceneSpec& spec, std::size_t frame) {
  if (frame >= spec.frame_count) throw Error("raycast: frame index out of range");
  return cast_dual(spec.intrinsics, build_raymap(spec.intrinsics, spec.camera_pose(frame)),
                   PrimitiveSet::of(spec.statics), dynamic_primitives_at(spec, frame));
}

/// Ground-truth depth and dynamic mask of `frame` from its true camera pose.
inline GroundTruthFrame raycast(const SceneSpec& spec, std::size_t frame, bool include_dynamic) {
  auto dual = raycast_dual(spec, frame);
  GroundTruthFrame gt;
  gt.frame_index = frame;
  gt.pose = spec.camera_pose(frame);
  if (include_dynamic) {
    gt.depth = std::move(dual.full);
    gt.dynamic_mask = std::move(dual.dynamic_mask);
  } else {
    gt.depth = std::move(dual.static_only);
    gt.dynamic_mask = Grid<std::uint8_t>(spec.intrinsics.width, spec.intrinsics.height, 0);
  }
  return gt;
}

/// Fraction of valid pixels covered by dynamic primitives.
inline double dynamic_ratio(const GroundTruthFrame& gt) {
  std::size_t dyn = 0, valid = 0;
  for (std::size_t i = 0; i < gt.dynamic_mask.size(); ++i) {
    valid += gt.depth.valid[i] != 0;
    dyn += gt.dynamic_mask[i] != 0;
  }
  return valid ? static_cast<double>(dyn) / static_cast<double>(valid) : 0.0;
}

/// Random Sim(3) for reset `segment` (1-based) under `jitter`.
inline SimTransform reset_perturbation(const ResetJitter& jitter, std::uint64_t seed, std::size_t segment) {
  if (segment == 0) return SimTransform::identity();
  if (segment - 1 < jitter.scripted.size()) return jitter.scripted[segment - 1];
  std::mt19937_64 rng(detail::mix({seed, detail::kReset, segment}));
  std::normal_distribution<double> n01(0.0, 1.0);
  SimTransform p;
  p.scale = std::exp(jitter.scale_log_sigma * n01(rng));
  Eigen::Vector3d axis(n01(rng), n01(rng), n01(rng));
  if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitY();
  p.rotation = axis_angle(axis, jitter.rotation_deg * n01(rng) * std::numbers::pi / 180.0);
  p.translation = Eigen::Vector3d(n01(rng), n01(rng), n01(rng)) * jitter.translation_sigma;
  return p;
}

/// Mock backbone over a SceneSpec. Outputs are deterministic functions of the
/// scene seed, the frame, the reset segment and the inputs.
class SimulatedBackbone final : public Backbone {
 public:
  static constexpr int kFeatureDims = 4;

  SimulatedBackbone(SceneSpec spec, int patch_size)
      : spec_(std::move(spec)),
        patches_(spec_.intrinsics.width, spec_.intrinsics.height, patch_size) {
    spec_.validate();
    statics_ = PrimitiveSet::of(spec_.statics);
    build_attention();
  }

  const SceneSpec& spec() const noexcept { return spec_; }
  const PatchGrid& patches() const noexcept { return patches_; }
  const AttentionMap& attention() const noexcept { return attention_; }
  const std::vector<Eigen::Vector2d>& anchors() const noexcept { return anchors_; }
  const Intrinsics& intrinsics() const override { return spec_.intrinsics; }
  std::size_t frame_count() const override { return spec_.frame_count; }
  FrameHandle frame(std::size_t index) const override { return {index, spec_.timestamp(index)}; }

  /// Current reset segment (0 before the first reset) and its world-frame perturbation.
  std::size_t segment() const noexcept { return segment_ < 0 ? 0 : static_cast<std::size_t>(segment_); }
  const SimTransform& segment_transform() const noexcept { return segment_transform_; }

  /// Burst flag of a frame: inside a window of `burst_length` frames after a burst start.
  bool in_burst(std::size_t frame) const {
    const auto& n = spec_.noise;
    if (n.burst_probability <= 0.0) return false;
    const std::size_t first = frame + 1 >= static_cast<std::size_t>(n.burst_length) ? frame + 1 - n.burst_length : 0;
    for (std::size_t f = first; f <= frame; ++f) {
      if (detail::uniform01(detail::mix({spec_.seed, detail::kBurst, f})) < n.burst_probability) return true;
    }
    return false;
  }

  StateVector initial_state(const FrameHandle& repeated) override {
    ++segment_;
    if (segment_ > 0) {
      const SimTransform jitter = reset_perturbation(spec_.reset_jitter, spec_.seed, static_cast<std::size_t>(segment_));
      segment_transform_ = jitter.compose(segment_transform_);
    }
    const auto dual = raycast_dual(spec_, repeated.index);
    StateVector s;
    s.tokens = attention_.weights * patch_features(dual.full);
    s.frame_index = static_cast<long>(repeated.index);
    return s;
  }

  FramePrediction decode_main(const FrameHandle& frame, const RayMapTensor& /*raymap*/, const StateVector& state,
                              const Grid<double>* /*static_weights*/ = nullptr) const override {
    check_state(state);
    const std::size_t t = frame.index;
    const RigidPose gt_pose = spec_.camera_pose(t);
    const auto dual = cast_dual(spec_.intrinsics, build_raymap(spec_.intrinsics, gt_pose), statics_,
                                dynamic_primitives_at(spec_, t));
    const DepthMap& full = dual.full;
    const Eigen::MatrixXd target_full = attention_.weights * patch_features(full);
    const Eigen::MatrixXd target_static = attention_.weights * patch_features(dual.static_only);

    const double contamination = contamination_of(state, target_static);
    const double scale = 1.0 + spec_.noise.memory_coupling * contamination;
    const bool burst = in_burst(t);
    const double gain = burst ? spec_.noise.burst_gain : 1.0;

    std::mt19937_64 rng(detail::mix({spec_.seed, detail::kMain, t, static_cast<std::uint64_t>(segment_ + 1)}));
    std::normal_distribution<double> n01(0.0, 1.0);

    FramePrediction pred;
    pred.depth = DepthMap(full.width(), full.height());
    pred.confidence = Grid<double>(full.width(), full.height(), 1.0);
    const double sigma = spec_.noise.sigma_main * scale;
    for (std::size_t i = 0; i < full.values.size(); ++i) {
      const double eps = sigma > 0.0 ? sigma * n01(rng) : 0.0;
      if (full.valid[i]) {
        pred.depth.values[i] = full.values[i] * (1.0 + eps);
        pred.depth.valid[i] = pred.depth.values[i] > 0.0 ? 1 : 0;
        if (!pred.depth.valid[i]) pred.depth.values[i] = 0.0;
      }
      pred.confidence[i] = 1.0 / (1.0 + std::abs(eps));
    }

    const double sigma_t = spec_.noise.pose_translation_sigma * scale * gain;
    const double sigma_r = spec_.noise.pose_rotation_sigma_deg * scale * gain * std::numbers::pi / 180.0;
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    Eigen::Matrix3d rot_noise = Eigen::Matrix3d::Identity();
    if (sigma_t > 0.0) offset = Eigen::Vector3d(n01(rng), n01(rng), n01(rng)) * sigma_t;
    if (sigma_r > 0.0) {
      Eigen::Vector3d axis(n01(rng), n01(rng), n01(rng));
      if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitZ();
      rot_noise = axis_angle(axis, sigma_r * n01(rng));
    }
    pred.pose = RigidPose::from_camera_center(gt_pose.camera_to_world_rotation() * rot_noise,
                                              gt_pose.center() + offset);

    StateDelta delta;
    delta.tokens = spec_.memory.relaxation * (target_full - state.tokens);
    if (burst && spec_.noise.burst_state_sigma > 0.0) {
      std::mt19937_64 srng(detail::mix({spec_.seed, detail::kState, t, static_cast<std::uint64_t>(segment_ + 1)}));
      for (Eigen::Index i = 0; i < delta.tokens.size(); ++i) delta.tokens(i) += spec_.noise.burst_state_sigma * n01(srng);
    }
    delta.frame_index = static_cast<long>(t);
    pred.state_delta = std::move(delta);
    pred.attention = attention_;

    return transform_prediction(segment_transform_, std::move(pred));
  }

  FramePrediction decode_raymap_only(const RayMapTensor& raymap, const StateVector& state) const override {
    check_state(state);
    // Rays arrive in the segment's (possibly perturbed) frame; cast them in the true world.
    const SimTransform to_world = segment_transform_.inverse();
    RayMapTensor world;
    world.origin = to_world.apply(raymap.origin);
    world.directions = Grid<Eigen::Vector3d>(raymap.width(), raymap.height());
    for (std::size_t i = 0; i < raymap.directions.size(); ++i) {
      world.directions[i] = (to_world.rotation * raymap.directions[i]).normalized();
    }
    const DepthMap static_depth = cast_dual(spec_.intrinsics, world, statics_, PrimitiveSet{}).static_only;

    std::mt19937_64 rng(detail::mix({spec_.seed, detail::kRay, static_cast<std::uint64_t>(state.frame_index + 1),
                                     static_cast<std::uint64_t>(segment_ + 1), detail::bits(raymap.origin.x()),
                                     detail::bits(raymap.origin.y()), detail::bits(raymap.origin.z())}));
    std::normal_distribution<double> n01(0.0, 1.0);
    FramePrediction pred;
    pred.depth = DepthMap(static_depth.width(), static_depth.height());
    pred.confidence = Grid<double>(static_depth.width(), static_depth.height(), 1.0);
    const double sigma = spec_.noise.sigma_ray;
    for (std::size_t i = 0; i < static_depth.values.size(); ++i) {
      const double eps = sigma > 0.0 ? sigma * n01(rng) : 0.0;
      if (static_depth.valid[i]) {
        const double z = static_depth.values[i] * segment_transform_.scale * (1.0 + eps);
        pred.depth.values[i] = z > 0.0 ? z : 0.0;
        pred.depth.valid[i] = z > 0.0 ? 1 : 0;
      }
      pred.confidence[i] = 1.0 / (1.0 + std::abs(eps));
    }
    return pred;
  }

  /// Relative distance of the memory from the attention-pooled static content.
  double contamination_of(const StateVector& state, const Eigen::MatrixXd& target_static) const {
    const double reference = target_static.rowwise().norm().mean();
    if (!(reference > 0.0)) return 0.0;
    return (state.tokens - target_static).rowwise().norm().mean() / reference;
  }

  /// Memory contamination for `state` at `frame` (diagnostic).
  double contamination(const StateVector& state, std::size_t frame) const {
    const auto dual = raycast_dual(spec_, frame);
    return contamination_of(state, attention_.weights * patch_features(dual.static_only));
  }

  /// Per-patch content: mean, min and max inverse depth and valid fraction.
  Eigen::MatrixXd patch_features(const DepthMap& depth) const {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(patches_.token_count()), kFeatureDims);
    for (std::size_t k = 0; k < patches_.token_count(); ++k) {
      const PixelRect r = patches_.rect(k);
      double sum = 0.0, lo = kInf, hi = 0.0;
      int valid = 0;
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
          if (!depth.is_valid(x, y)) continue;
          const double inv = 1.0 / depth.values(x, y);
          sum += inv;
          lo = std::min(lo, inv);
          hi = std::max(hi, inv);
          ++valid;
        }
      }
      const auto row = static_cast<Eigen::Index>(k);
      if (valid > 0) {
        f(row, 0) = sum / valid;
        f(row, 1) = lo;
        f(row, 2) = hi;
      }
      f(row, 3) = static_cast<double>(valid) / r.area();
    }
    return f;
  }

 private:
  void check_state(const StateVector& state) const {
    if (state.tokens.rows() != spec_.memory.state_tokens || state.tokens.cols() != kFeatureDims) {
      throw ShapeError("simulated backbone: state shape differs from session");
    }
  }

  void build_attention() {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(spec_.memory.state_tokens))));
    const double w = spec_.intrinsics.width;
    const double h = spec_.intrinsics.height;
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) anchors_.emplace_back((c + 0.5) * w / side - 0.5, (r + 0.5) * h / side - 0.5);
    }
    const double sigma = spec_.memory.attention_sigma_patches * patches_.patch_size();
    const auto m = static_cast<Eigen::Index>(patches_.token_count());
    attention_.weights.resize(static_cast<Eigen::Index>(anchors_.size()), m);
    for (std::size_t j = 0; j < anchors_.size(); ++j) {
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Vector2d d = anchors_[j] - patches_.rect(static_cast<std::size_t>(k)).center();
        attention_.weights(static_cast<Eigen::Index>(j), k) = std::exp(-d.squaredNorm() / (2.0 * sigma * sigma));
      }
    }
    attention_.normalize_rows();
  }

  SceneSpec spec_;
  PrimitiveSet statics_;
  PatchGrid patches_;
  AttentionMap attention_;
  std::vector<Eigen::Vector2d> anchors_;
  long segment_ = -1;
  SimTransform segment_transform_;
};

/// A prediction tagged with its frame and whether it was decoded after a reset.
struct StreamRecord {
  std::size_t frame_index = 0;
  bool post_reset = false;
  FramePrediction prediction;
};

/// Transform every prediction at frames >= `at_frame` by `perturbation`, emitting the
/// boundary frame twice: the untouched pre-reset copy, then the perturbed post-reset copy.
inline std::vector<StreamRecord> inject_reset_perturbation(const std::vector<StreamRecord>& stream,
                                                           std::size_t at_frame, const SimTransform& perturbation) {
  const bool present = std::any_of(stream.begin(), stream.end(),
                                   [&](const StreamRecord& r) { return r.frame_index == at_frame; });
  if (!present) throw Error("inject_reset_perturbation: frame index not in stream");
  std::vector<StreamRecord> out;
  out.reserve(stream.size() + 1);
  for (const auto& rec : stream) {
    if (rec.frame_index < at_frame) {
      out.push_back(rec);
      continue;
    }
    if (rec.frame_index == at_frame && !rec.post_reset) out.push_back(rec);
    StreamRecord moved = rec;
    moved.post_reset = rec.post_reset || rec.frame_index == at_frame;
    moved.prediction = transform_prediction(perturbation, rec.prediction);
    out.push_back(std::move(moved));
  }
  return out;
}

/// Knobs of the procedural room generator.
struct RoomOptions {
  std::size_t frames = 150;
  int dynamic_objects = 2;
  double object_scale = 1.0;    // multiplies moving-object sizes
  double object_near = 3.0;     // closest object depth along the view axis, meters
  double object_far = 6.5;
  NoiseModel noise = default_noise();
  ResetJitter jitter = default_jitter();

  static NoiseModel default_noise() {
    NoiseModel n;
    n.sigma_main = 0.005;
    n.sigma_ray = 0.005;
    n.pose_translation_sigma = 0.001;
    n.pose_rotation_sigma_deg = 0.05;
    n.burst_probability = 0.015;
    n.burst_length = 3;
    n.burst_gain = 40.0;
    n.burst_state_sigma = 4.0;
    n.memory_coupling = 4.0;
    return n;
  }

  static ResetJitter default_jitter() {
    ResetJitter j;
    j.scale_log_sigma = 0.1;
    j.rotation_deg = 2.0;
    j.translation_sigma = 0.1;
    return j;
  }
};

/// A furnished room (floor, ceiling, four walls, a few static boxes) with moving
/// objects in front of a slowly advancing, swaying camera. Image y points down, so
/// the floor is at positive world y.
inline SceneSpec make_room_scene(std::uint64_t seed, const RoomOptions& opt = {}) {
  std::mt19937_64 rng(detail::mix({seed, 0x524F4F4DULL}));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  SceneSpec s;
  s.name = "room_" + std::to_string(seed);
  s.seed = seed;
  s.frame_count = opt.frames;
  s.noise = opt.noise;
  s.reset_jitter = opt.jitter;

  const double floor_y = 1.5;
  s.statics.push_back(Plane{Eigen::Vector3d::UnitY(), floor_y});
  s.statics.push_back(Plane{Eigen::Vector3d::UnitY(), -2.5});
  s.statics.push_back(Plane{Eigen::Vector3d::UnitX(), -5.0});
  s.statics.push_back(Plane{Eigen::Vector3d::UnitX(), 5.0});
  s.statics.push_back(Plane{Eigen::Vector3d::UnitZ(), 11.0});
  s.statics.push_back(Plane{Eigen::Vector3d::UnitZ(), -4.0});
  const double side = u(rng) < 0.5 ? -1.0 : 1.0;
  const double cab_z = between(7.0, 9.0);
  s.statics.push_back(Box{Eigen::Vector3d(side > 0 ? 3.2 : -5.0, -0.4, cab_z),
                          Eigen::Vector3d(side > 0 ? 5.0 : -3.2, floor_y, cab_z + 1.5)});
  const double table_x = between(-1.5, 1.5);
  s.statics.push_back(Box{Eigen::Vector3d(table_x - 0.9, 0.75, 9.0), Eigen::Vector3d(table_x + 0.9, floor_y, 10.2)});
  s.statics.push_back(Sphere{Eigen::Vector3d(-side * between(2.5, 3.5), floor_y - 0.6, between(6.0, 8.5)), 0.6});

  for (int k = 0; k < opt.dynamic_objects; ++k) {
    DynamicObject obj;
    const double sc = opt.object_scale * between(0.8, 1.2);
    if (u(rng) < 0.5) {
      const Eigen::Vector3d half(0.3 * sc, 0.75 * sc, 0.25 * sc);
      obj.shape = Box{-half, half};
    } else {
      obj.shape = Sphere{Eigen::Vector3d::Zero(), 0.55 * sc};
    }
    Motion& m = obj.motion;
    const double depth = between(opt.object_near, opt.object_far);
    m.origin = Eigen::Vector3d(between(-1.2, 1.2), between(-0.2, 0.4), depth);
    m.rate = between(0.03, 0.07);
    m.phase = between(0.0, 2.0 * std::numbers::pi);
    if (u(rng) < 0.5) {
      m.kind = MotionKind::oscillate;
      m.axis_a = Eigen::Vector3d(between(1.0, 2.0), 0.0, between(-0.5, 0.5));
    } else {
      m.kind = MotionKind::circular;
      m.axis_a = Eigen::Vector3d(between(0.8, 1.6), 0.0, 0.0);
      m.axis_b = Eigen::Vector3d(0.0, 0.0, between(0.3, 0.8));
    }
    s.dynamics.push_back(obj);
  }

  CameraPath& c = s.camera;
  c.start = Eigen::Vector3d(between(-0.5, 0.5), between(-0.2, 0.2), between(-0.5, 0.0));
  // Long sequences drift no further than a 150-frame one so the camera stays inside the room.
  const double drift = std::min(1.0, 150.0 / static_cast<double>(std::max<std::size_t>(opt.frames, 1)));
  c.velocity = Eigen::Vector3d(between(-0.006, 0.006), 0.0, between(0.004, 0.01)) * drift;
  c.sway_amplitude = Eigen::Vector3d(between(0.2, 0.4), between(0.08, 0.15), between(0.1, 0.2));
  c.sway_rate = between(0.04, 0.08);
  c.look_at = Eigen::Vector3d(between(-0.5, 0.5), 0.3, 11.0);
  c.look_sway = Eigen::Vector3d(between(0.5, 1.2), between(0.1, 0.3), 0.0);
  // Every second dash returns the camera to where the previous one started.
  for (double t = between(10.0, 30.0); t + 8.0 < static_cast<double>(opt.frames); t += between(25.0, 45.0)) {
    const double heading = between(0.0, 2.0 * std::numbers::pi);
    const double len = between(0.3, 0.6);
    const double lift = between(-0.1, 0.1);
    const double duration = between(4.0, 8.0);
    const Eigen::Vector3d step(len * std::cos(heading), lift, 0.5 * len * std::sin(heading));
    c.dashes.push_back(Dash{t, duration, c.dashes.size() % 2 == 0 ? step : Eigen::Vector3d(-c.dashes.back().displacement)});
  }
  s.validate();
  return s;
}

/// Sequences used for ablations and end-to-end checks.
inline std::vector<SceneSpec> standard_suite(std::size_t count, std::uint64_t base_seed = 1,
                                             const RoomOptions& opt = {}) {
  std::vector<SceneSpec> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_room_scene(base_seed + i, opt));
  return out;
}

/// Mean dynamic-pixel ratio over every `stride`-th frame.
inline double mean_dynamic_ratio(const SceneSpec& spec, std::size_t stride = 10) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < spec.frame_count; f += std::max<std::size_t>(stride, 1)) {
    sum += dynamic_ratio(raycast(spec, f, true));
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

enum class Stratum { low, medium, high };

inline Stratum stratum_of(double ratio) {
  if (ratio <= 0.10) return Stratum::low;
  if (ratio <= 0.30) return Stratum::medium;
  return Stratum::high;
}

struct StratifiedScene {
  SceneSpec spec;
  Stratum stratum = Stratum::low;
  double dynamic_ratio = 0.0;
};

// Frames mostly covered by moving objects leave too little static context to threshold against.
inline constexpr double kMaxDynamicRatio = 0.45;

/// `per_stratum` scenes for each dynamic-ratio band (<=10%, 10-30%, >30%). Object
/// count, size and distance are chosen per band and candidates are drawn until the
/// measured ratio lands in the band.
inline std::vector<StratifiedScene> stratified_suite(std::size_t per_stratum, std::uint64_t base_seed = 1000,
                                                     std::size_t frames = 60, NoiseModel noise = RoomOptions::default_noise()) {
  std::vector<StratifiedScene> out;
  const Stratum bands[] = {Stratum::low, Stratum::medium, Stratum::high};
  std::uint64_t seed = base_seed;
  for (Stratum band : bands) {
    std::size_t made = 0;
    for (int attempt = 0; made < per_stratum; ++attempt) {
      if (attempt > 200 * static_cast<int>(per_stratum)) throw Error("stratified_suite: cannot fill dynamic-ratio band");
      RoomOptions opt;
      opt.frames = frames;
      opt.noise = noise;
      switch (band) {
        case Stratum::low:
          opt.dynamic_objects = 1;
          opt.object_scale = 0.4 + 0.05 * static_cast<double>(seed % 4);
          opt.object_near = 5.0;
          opt.object_far = 7.5;
          break;
        case Stratum::medium:
          opt.dynamic_objects = 2 + static_cast<int>(seed % 2);
          opt.object_scale = 1.1 + 0.1 * static_cast<double>(seed % 4);
          opt.object_near = 2.8;
          opt.object_far = 4.5;
          break;
        case Stratum::high:
          opt.dynamic_objects = 4 + static_cast<int>(seed % 2);
          opt.object_scale = 1.5 + 0.1 * static_cast<double>(seed % 4);
          opt.object_near = 4.0;
          opt.object_far = 6.0;
          break;
      }
      SceneSpec spec = make_room_scene(seed++, opt);
      const double ratio = mean_dynamic_ratio(spec);
      if (stratum_of(ratio) != band || ratio <= 0.0 || ratio > kMaxDynamicRatio) continue;
      out.push_back({std::move(spec), band, ratio});
      ++made;
    }
  }
  return out;
}

}  // namespace raymap3r::sim
