// Static 3-d tree for exact nearest-neighbour queries.
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "sfmot/geometry.hpp"

namespace sfmot {

class KdTree3 {
 public:
  explicit KdTree3(std::span<const Vec3> points) : pts_(points.begin(), points.end()), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(points.size());
    root_ = build(0, order_.size(), 0);
  }

  struct Hit {
    std::size_t index;
    double distance;
  };

  /// Nearest stored point; ties go to the lower index.
  std::optional<Hit> nearest(const Vec3& q) const {
    if (root_ < 0) return std::nullopt;
    Hit best{0, std::numeric_limits<double>::infinity()};
    double best_sq = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_sq);
    best.distance = std::sqrt(best_sq);
    return best;
  }

  std::size_t size() const { return pts_.size(); }

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1, right = -1;
  };

  int build(std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                       return pts_[a][axis] < pts_[b][axis] || (pts_[a][axis] == pts_[b][axis] && a < b);
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis});
    const int l = build(lo, mid, depth + 1);
    const int r = build(mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  void search(int id, const Vec3& q, Hit& best, double& best_sq) const {
    const Node& nd = nodes_[static_cast<std::size_t>(id)];
    const Vec3& p = pts_[nd.point];
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_sq || (d2 == best_sq && nd.point < best.index)) {
      best_sq = d2;
      best.index = nd.point;
    }
    const double diff = q[nd.axis] - p[nd.axis];
    const int near = diff <= 0 ? nd.left : nd.right;
    const int far = diff <= 0 ? nd.right : nd.left;
    if (near >= 0) search(near, q, best, best_sq);
    if (far >= 0 && diff * diff <= best_sq) search(far, q, best, best_sq);
  }

  std::vector<Vec3> pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace sfmot
