#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raymap3r/error.hpp"
#include "raymap3r/grid.hpp"
#include "raymap3r/knn.hpp"

namespace raymap3r {

/// Pinhole intrinsics in pixels. Pixel (x, y) denotes integer coordinates; the
/// principal point carries any sub-pixel offset.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw Error("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
      throw Error("intrinsics: principal point must lie inside the image");
    }
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  /// K^-1 (x, y, 1)^T.
  Eigen::Vector3d back_project(double x, double y) const { return {(x - cx) / fx, (y - cy) / fy, 1.0}; }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// World-to-camera rigid transform: x_cam = R * x_world + t.
struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidPose identity() { return {}; }

  friend bool operator==(const RigidPose&, const RigidPose&) = default;

  /// Pose of a camera located at `center` whose camera-to-world rotation is `cam_to_world`.
  static RigidPose from_camera_center(const Eigen::Matrix3d& cam_to_world, const Eigen::Vector3d& center) {
    RigidPose p;
    p.rotation = cam_to_world.transpose();
    p.translation = -p.rotation * center;
    return p;
  }

  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
  Eigen::Matrix3d camera_to_world_rotation() const { return rotation.transpose(); }

  Eigen::Vector3d apply(const Eigen::Vector3d& world) const { return rotation * world + translation; }

  RigidPose inverse() const {
    RigidPose p;
    p.rotation = rotation.transpose();
    p.translation = -p.rotation * translation;
    return p;
  }

  /// (this ∘ other)(x) = this(other(x)).
  RigidPose compose(const RigidPose& other) const {
    RigidPose p;
    p.rotation = rotation * other.rotation;
    p.translation = rotation * other.translation + translation;
    return p;
  }

  bool is_valid(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
  }
};

/// Similarity transform acting on points as p -> s * R * p + t.
/// Angle of a rotation matrix in radians, accurate near 0 and pi.
inline double rotation_angle_of(const Eigen::Matrix3d& r) {
  const Eigen::Vector3d v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * v.norm(), 0.5 * (r.trace() - 1.0));
}

struct SimTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static SimTransform identity() { return {}; }

  friend bool operator==(const SimTransform&, const SimTransform&) = default;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (rotation * p) + translation; }

  /// (this ∘ other)(p) = this(other(p)).
  SimTransform compose(const SimTransform& other) const {
    SimTransform r;
    r.scale = scale * other.scale;
    r.rotation = rotation * other.rotation;
    r.translation = scale * (rotation * other.translation) + translation;
    return r;
  }

  SimTransform inverse() const {
    SimTransform r;
    r.scale = 1.0 / scale;
    r.rotation = rotation.transpose();
    r.translation = -(r.scale * (r.rotation * translation));
    return r;
  }

  /// Rotation angle in radians.
  double rotation_angle() const { return rotation_angle_of(rotation); }
};

/// Re-express a world-to-camera pose after the world is mapped through `g`.
/// The camera center moves to g(c), orientation becomes R * g.R^T, and camera-frame
/// coordinates scale by g.scale.
inline RigidPose transform_pose(const SimTransform& g, const RigidPose& pose) {
  const Eigen::Matrix3d rotation = pose.rotation * g.rotation.transpose();
  const Eigen::Vector3d center = g.apply(pose.center());
  RigidPose out;
  out.rotation = rotation;
  out.translation = -rotation * center;
  return out;
}

/// Depth in meters per pixel with an explicit validity mask.
struct DepthMap {
  Grid<double> values;
  Grid<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int width, int height) : values(width, height, 0.0), valid(width, height, 0) {}

  int width() const noexcept { return values.width(); }
  int height() const noexcept { return values.height(); }
  bool is_valid(int x, int y) const { return valid(x, y) != 0; }

  void set(int x, int y, double depth) {
    const bool ok = std::isfinite(depth) && depth > 0.0;
    values(x, y) = ok ? depth : 0.0;
    valid(x, y) = ok ? 1 : 0;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
};

/// Points in meters with optional weights in [0, 1] and optional unit normals.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> weights;
  std::vector<Eigen::Vector3d> normals;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_weights() const noexcept { return !weights.empty(); }
  bool has_normals() const noexcept { return !normals.empty(); }

  void validate() const {
    if (has_weights()) {
      if (weights.size() != points.size()) throw ShapeError("point cloud: weights length differs from points");
      for (double w : weights) {
        if (!(w >= 0.0 && w <= 1.0)) throw Error("point cloud: weights must lie in [0, 1]");
      }
    }
    if (has_normals() && normals.size() != points.size()) {
      throw ShapeError("point cloud: normals length differs from points");
    }
  }
};

/// World point seen at pixel (x, y) with camera-frame depth z.
inline Eigen::Vector3d unproject_pixel(int x, int y, double z, const Intrinsics& intr, const RigidPose& pose) {
  const Eigen::Vector3d cam = z * intr.back_project(x, y);
  return pose.rotation.transpose() * (cam - pose.translation);
}

/// Back-project every valid pixel into world coordinates, row-major. `stride` > 1
/// keeps only pixels whose coordinates are both multiples of the stride.
inline PointCloud unproject(const DepthMap& depth, const Intrinsics& intr, const RigidPose& pose, int stride = 1) {
  if (depth.width() != intr.width || depth.height() != intr.height) {
    throw ShapeError("unproject: depth map size does not match intrinsics");
  }
  if (stride < 1) throw Error("unproject: stride must be >= 1");
  PointCloud cloud;
  for (int y = 0; y < depth.height(); y += stride) {
    for (int x = 0; x < depth.width(); x += stride) {
      if (!depth.is_valid(x, y)) continue;
      cloud.points.push_back(unproject_pixel(x, y, depth.values(x, y), intr, pose));
    }
  }
  return cloud;
}

namespace detail {

inline SimTransform umeyama_impl(std::span<const Eigen::Vector3d> source, std::span<const Eigen::Vector3d> target,
                                 std::span<const double> weights, bool estimate_scale) {
  const std::size_t n = source.size();
  if (target.size() != n || weights.size() != n) throw ShapeError("weighted_umeyama: input lengths differ");
  if (n < 3) throw DegenerateError("weighted_umeyama: need at least 3 correspondences");

  double mass = 0.0;
  Eigen::Vector3d mu_s = Eigen::Vector3d::Zero();
  Eigen::Vector3d mu_t = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("weighted_umeyama: weights must be finite and non-negative");
    mass += w;
    mu_s += w * source[i];
    mu_t += w * target[i];
  }
  if (!(mass > 0.0)) throw DegenerateError("weighted_umeyama: zero weight mass");
  mu_s /= mass;
  mu_t /= mass;

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double var_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    const Eigen::Vector3d cs = source[i] - mu_s;
    cov.noalias() += w * (target[i] - mu_t) * cs.transpose();
    var_s += w * cs.squaredNorm();
  }
  cov /= mass;
  var_s /= mass;

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (!(sv[0] > 0.0) || !(sv[1] > 1e-12 * sv[0])) {
    throw DegenerateError("weighted_umeyama: weighted covariance has rank < 2");
  }

  Eigen::Vector3d sign(1.0, 1.0, 1.0);
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sign[2] = -1.0;

  SimTransform out;
  out.rotation = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  out.scale = estimate_scale ? sv.dot(sign) / var_s : 1.0;
  out.translation = mu_t - out.scale * (out.rotation * mu_s);
  return out;
}

}  // namespace detail

/// Similarity minimising sum_i w_i |s R source_i + t - target_i|^2 (weighted Umeyama).
/// Throws DegenerateError for fewer than 3 points, zero weight mass, or a weighted
/// cross-covariance of rank < 2.
inline SimTransform weighted_umeyama(std::span<const Eigen::Vector3d> source, std::span<const Eigen::Vector3d> target,
                                     std::span<const double> weights) {
  return detail::umeyama_impl(source, target, weights, true);
}

inline SimTransform weighted_umeyama(const PointCloud& source, const PointCloud& target,
                                     std::span<const double> weights) {
  return weighted_umeyama(std::span(source.points), std::span(target.points), weights);
}

/// Rigid (scale fixed to 1) variant of weighted_umeyama.
inline SimTransform weighted_rigid_fit(std::span<const Eigen::Vector3d> source,
                                       std::span<const Eigen::Vector3d> target, std::span<const double> weights) {
  return detail::umeyama_impl(source, target, weights, false);
}

/// Result of normal estimation; `degenerate[i]` is set where the neighbourhood spans
/// fewer than two directions and the normal is therefore arbitrary (but unit length).
struct NormalEstimate {
  PointCloud cloud;
  std::vector<std::uint8_t> degenerate;
  std::size_t degenerate_count = 0;
};

/// Per-point normals from the smallest-eigenvalue eigenvector of the covariance of
/// the point and its k nearest neighbours, oriented toward `viewpoint`.
/// k is clamped to size - 1 so small clouds still produce (possibly degenerate) output.
inline NormalEstimate estimate_normals_checked(const PointCloud& cloud, int k,
                                               const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero()) {
  if (k < 3) throw Error("estimate_normals: k must be >= 3");
  if (cloud.size() < 3) throw Error("estimate_normals: need at least 3 points");
  const std::size_t neighbours = std::min<std::size_t>(static_cast<std::size_t>(k), cloud.size() - 1);

  NormalEstimate out;
  out.cloud = cloud;
  out.cloud.normals.assign(cloud.size(), Eigen::Vector3d::UnitZ());
  out.degenerate.assign(cloud.size(), 0);

  const KdTree tree(cloud.points);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nn = tree.k_nearest(cloud.points[i], neighbours + 1);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& n : nn) mean += cloud.points[n.index];
    mean /= static_cast<double>(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& n : nn) {
      const Eigen::Vector3d d = cloud.points[n.index] - mean;
      cov.noalias() += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
    Eigen::Vector3d normal = eig.eigenvectors().col(0);
    const bool degenerate = !(evals[1] > 1e-12 * std::max(evals[2], 1e-300)) || !normal.allFinite();
    if (!normal.allFinite() || normal.norm() == 0.0) normal = Eigen::Vector3d::UnitZ();
    normal.normalize();
    if (normal.dot(viewpoint - cloud.points[i]) < 0.0) normal = -normal;
    out.cloud.normals[i] = normal;
    if (degenerate) {
      out.degenerate[i] = 1;
      ++out.degenerate_count;
    }
  }
  return out;
}

inline PointCloud estimate_normals(const PointCloud& cloud, int k,
                                   const Eigen::Vector3d& viewpoint = Eigen::Vector3d::Zero()) {
  return estimate_normals_checked(cloud, k, viewpoint).cloud;
}

/// Rotation about a unit axis by `radians`.
inline Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

/// Angle in degrees between two rotation matrices.
inline double rotation_distance_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return rotation_angle_of(a.transpose() * b) * 180.0 / std::numbers::pi;
}

}  // namespace raymap3r
