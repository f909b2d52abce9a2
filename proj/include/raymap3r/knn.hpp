#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace raymap3r {

/// Exact nearest-neighbour index over a fixed set of 3-D points.
///
/// Static kd-tree with median splits along the widest axis. Queries are exact
/// (no approximation); the tree stores indices into a private copy of the points.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index;
    double squared_distance;
  };

  KdTree() = default;

  explicit KdTree(std::span<const Eigen::Vector3d> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(points_.size() / kLeafSize * 2 + 2);
    if (!points_.empty()) build(0, points_.size());
  }

  std::size_t size() const noexcept { return points_.size(); }
  const Eigen::Vector3d& point(std::size_t i) const { return points_[i]; }

  /// Nearest stored point to `query`. Requires a non-empty tree.
  Neighbor nearest(const Eigen::Vector3d& query) const {
    Neighbor best{0, std::numeric_limits<double>::infinity()};
    if (!nodes_.empty()) search_nearest(0, query, best);
    return best;
  }

  /// The k nearest stored points, closest first. Returns fewer when the tree is smaller than k.
  std::vector<Neighbor> k_nearest(const Eigen::Vector3d& query, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (k == 0 || nodes_.empty()) return heap;
    heap.reserve(k + 1);
    search_k(0, query, k, heap);
    std::sort_heap(heap.begin(), heap.end(), by_distance);
    return heap;
  }

 private:
  static constexpr std::size_t kLeafSize = 12;

  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::int64_t left = -1;
    std::int64_t right = -1;
  };

  static bool by_distance(const Neighbor& a, const Neighbor& b) {
    return a.squared_distance < b.squared_distance;
  }

  std::int64_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const std::int64_t left = build(begin, mid);
    const std::int64_t right = build(mid, end);
    Node& node = nodes_[static_cast<std::size_t>(id)];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }

  void search_nearest(std::int64_t id, const Eigen::Vector3d& q, Neighbor& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const double d2 = (points_[order_[i]] - q).squaredNorm();
        if (d2 < best.squared_distance || (d2 == best.squared_distance && order_[i] < best.index)) {
          best = {order_[i], d2};
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::int64_t near = diff < 0.0 ? node.left : node.right;
    const std::int64_t far = diff < 0.0 ? node.right : node.left;
    search_nearest(near, q, best);
    if (diff * diff <= best.squared_distance) search_nearest(far, q, best);
  }

  void search_k(std::int64_t id, const Eigen::Vector3d& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const double d2 = (points_[order_[i]] - q).squaredNorm();
        if (heap.size() < k) {
          heap.push_back({order_[i], d2});
          std::push_heap(heap.begin(), heap.end(), by_distance);
        } else if (d2 < heap.front().squared_distance) {
          std::pop_heap(heap.begin(), heap.end(), by_distance);
          heap.back() = {order_[i], d2};
          std::push_heap(heap.begin(), heap.end(), by_distance);
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::int64_t near = diff < 0.0 ? node.left : node.right;
    const std::int64_t far = diff < 0.0 ? node.right : node.left;
    search_k(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().squared_distance) search_k(far, q, k, heap);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace raymap3r
