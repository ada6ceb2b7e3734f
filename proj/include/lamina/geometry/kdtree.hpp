#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <utility>

#include "lamina/common.hpp"

namespace lamina {

/// 3-d tree over a point set for exact nearest-neighbor lookups.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(const std::vector<Vec3>& points) : points_(points) {
    require(!points_.empty(), "KdTree: empty point set");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * points_.size());
    build(0, static_cast<int>(points_.size()));
  }

  const std::vector<Vec3>& points() const { return points_; }

  /// Index of the closest stored point to q (ties broken by tree order).
  int nearest(const Vec3& q) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    nearest_rec(0, q, best, best_d2);
    return best;
  }

  /// Indices of the k nearest stored points to q, closest first, optionally
  /// skipping one index (for self-neighborhood queries).
  std::vector<int> knn(const Vec3& q, int k, int skip = -1) const {
    std::vector<std::pair<double, int>> heap;  // max-heap on distance²
    knn_rec(0, q, k, skip, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<int> out;
    out.reserve(heap.size());
    for (const auto& [d2, idx] : heap) out.push_back(idx);
    return out;
  }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };

  static constexpr int kLeafSize = 8;

  int build(int begin, int end) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i = begin; i < end; ++i) {
      node.lo = node.lo.cwiseMin(points_[order_[i]]);
      node.hi = node.hi.cwiseMax(points_[order_[i]]);
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    int axis;
    (node.hi - node.lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  double box_distance2(const Node& n, const Vec3& q) const {
    const Vec3 d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  void nearest_rec(int id, const Vec3& q, int& best, double& best_d2) const {
    const Node& n = nodes_[id];
    if (box_distance2(n, q) >= best_d2) return;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const double d2 = (points_[order_[i]] - q).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = order_[i];
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[n.left], q);
    const double dr = box_distance2(nodes_[n.right], q);
    if (dl < dr) {
      nearest_rec(n.left, q, best, best_d2);
      nearest_rec(n.right, q, best, best_d2);
    } else {
      nearest_rec(n.right, q, best, best_d2);
      nearest_rec(n.left, q, best, best_d2);
    }
  }

  void knn_rec(int id, const Vec3& q, int k, int skip,
               std::vector<std::pair<double, int>>& heap) const {
    const Node& n = nodes_[id];
    const double worst = static_cast<int>(heap.size()) < k
                             ? std::numeric_limits<double>::infinity()
                             : heap.front().first;
    if (box_distance2(n, q) >= worst) return;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        if (idx == skip) continue;
        const double d2 = (points_[idx] - q).squaredNorm();
        if (static_cast<int>(heap.size()) < k) {
          heap.emplace_back(d2, idx);
          std::push_heap(heap.begin(), heap.end());
        } else if (d2 < heap.front().first) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = {d2, idx};
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double dl = box_distance2(nodes_[n.left], q);
    const double dr = box_distance2(nodes_[n.right], q);
    if (dl < dr) {
      knn_rec(n.left, q, k, skip, heap);
      knn_rec(n.right, q, k, skip, heap);
    } else {
      knn_rec(n.right, q, k, skip, heap);
      knn_rec(n.left, q, k, skip, heap);
    }
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace lamina
