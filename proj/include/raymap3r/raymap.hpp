#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <vector>

#include "raymap3r/error.hpp"
#include "raymap3r/geom.hpp"
#include "raymap3r/grid.hpp"

namespace raymap3r {

/// Per-pixel camera rays in world coordinates. Under the pinhole model every ray
/// shares the camera center, so the origin is stored once.
struct RayMapTensor {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Grid<Eigen::Vector3d> directions;

  int width() const noexcept { return directions.width(); }
  int height() const noexcept { return directions.height(); }

  /// Expanded H x W x 6 layout (origin xyz, direction xyz), row-major.
  std::vector<float> to_channels() const {
    std::vector<float> out;
    out.reserve(directions.size() * 6);
    for (const auto& d : directions) {
      for (int c = 0; c < 3; ++c) out.push_back(static_cast<float>(origin[c]));
      for (int c = 0; c < 3; ++c) out.push_back(static_cast<float>(d[c]));
    }
    return out;
  }
};

/// Pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int area() const noexcept { return (x1 - x0) * (y1 - y0); }
  Eigen::Vector2d center() const { return {0.5 * (x0 + x1 - 1), 0.5 * (y0 + y1 - 1)}; }
};

/// Row-major square-patch tokenisation; boundary patches are clipped to the image.
class PatchGrid {
 public:
  PatchGrid() = default;
  PatchGrid(int width, int height, int patch_size) : width_(width), height_(height), patch_(patch_size) {
    if (patch_size < 1) throw Error("tokenize: patch_size must be >= 1");
    if (width < 1 || height < 1) throw ShapeError("tokenize: empty image");
    cols_ = (width + patch_size - 1) / patch_size;
    rows_ = (height + patch_size - 1) / patch_size;
  }

  int patch_size() const noexcept { return patch_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t token_count() const noexcept { return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_); }

  PixelRect rect(std::size_t token) const {
    const int r = static_cast<int>(token / static_cast<std::size_t>(cols_));
    const int c = static_cast<int>(token % static_cast<std::size_t>(cols_));
    return {c * patch_, r * patch_, std::min((c + 1) * patch_, width_), std::min((r + 1) * patch_, height_)};
  }

  std::size_t token_of(int x, int y) const {
    return static_cast<std::size_t>(y / patch_) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(x / patch_);
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int patch_ = 1;
  int rows_ = 0;
  int cols_ = 0;
};

/// Rays of a pinhole camera: origin -R^T t, direction normalize(R^T K^-1 (x, y, 1)^T).
inline RayMapTensor build_raymap(const Intrinsics& intr, const RigidPose& pose) {
  if (intr.fx == 0.0 || intr.fy == 0.0) throw Error("build_raymap: singular intrinsics (zero focal length)");
  if (intr.width < 1 || intr.height < 1) throw ShapeError("build_raymap: empty image");
  RayMapTensor map;
  const Eigen::Matrix3d rt = pose.rotation.transpose();
  map.origin = -rt * pose.translation;
  map.directions = Grid<Eigen::Vector3d>(intr.width, intr.height);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      map.directions(x, y) = (rt * intr.back_project(x, y)).normalized();
    }
  }
  return map;
}

/// RayMap rebuilt from the main branch's predicted pose; identical to build_raymap.
inline RayMapTensor raymap_from_predicted_pose(const RigidPose& predicted, const Intrinsics& intr) {
  return build_raymap(intr, predicted);
}

inline PatchGrid tokenize(int width, int height, int patch_size) { return PatchGrid(width, height, patch_size); }

inline PatchGrid tokenize(const RayMapTensor& tensor, int patch_size) {
  return PatchGrid(tensor.width(), tensor.height(), patch_size);
}

}  // namespace raymap3r
