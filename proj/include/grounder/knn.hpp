#pragma once

#include "grounder/geometry.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace grounder {

/// Exact k-nearest-neighbour index over a fixed set of 3D points (median-split kd-tree).
/// Holds a view of the input; the points must outlive the tree.
class KdTree3 {
 public:
  explicit KdTree3(std::span<const Vec3> points);

  struct Neighbor {
    std::size_t index;
    double distance;  // Euclidean
  };

  /// Up to `k` nearest neighbours of `query`, ascending by (distance, index).
  /// `exclude` removes one point index from consideration (typically the query itself).
  [[nodiscard]] std::vector<Neighbor> knn(const Vec3& query, std::size_t k,
                                          std::size_t exclude = kNone) const;
  [[nodiscard]] Neighbor nearest(const Vec3& query) const;

  [[nodiscard]] std::size_t size() const { return points_.size(); }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    int axis = -1;           // -1 for leaves
    double split = 0;
    int left = -1, right = -1;
    Vec3 lo, hi;  // bounds of the node's points
  };

  int build(std::size_t begin, std::size_t end);
  [[nodiscard]] double box_distance2(int node, const Vec3& q) const;

  template <class Visit>
  void search(const Vec3& query, Visit&& visit, const double& bound) const;

  std::span<const Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Vec3> sorted_;  // points_ permuted into order_

  struct Entry {
    Vec3 point;
    std::size_t index;
  };
  std::vector<Entry> work_;  // build scratch
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace grounder
