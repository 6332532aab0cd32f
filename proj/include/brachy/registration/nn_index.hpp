#pragma once

#include <cstdint>
#include <vector>

#include "brachy/geom/transform.hpp"

namespace brachy {

struct Neighbor {
  Eigen::Index index = -1;
  double squared_distance = 0;
};

/// Balanced KD-tree over a fixed point cloud. Queries are exact; among
/// equidistant points the lowest index wins. Immutable after construction.
class NNIndex {
 public:
  /// Throws InputError on an empty cloud.
  explicit NNIndex(PointCloud points);

  Neighbor nearest(const Vec3d& query) const;
  /// Same result as nearest(query); `hint` (any valid index, typically the
  /// previous match) only seeds the pruning bound.
  Neighbor nearest(const Vec3d& query, Eigen::Index hint) const;
  const PointCloud& points() const { return points_; }
  Eigen::Index size() const { return points_.cols(); }

 private:
  struct Node {
    std::int32_t begin, end;  // range in order_
    std::int32_t left = -1, right = -1;
    std::int32_t axis = -1;   // -1 for leaves
    double split = 0;
    Vec3d lo, hi;             // tight bounds of the node's points
  };
  static constexpr std::int32_t kLeafSize = 8;

  std::int32_t build(std::int32_t begin, std::int32_t end);
  void search(std::int32_t node, const Vec3d& q, Neighbor& best) const;
  double box_distance2(std::int32_t node, const Vec3d& q) const;

  PointCloud points_;
  PointCloud sorted_;  // points_ permuted into tree order, leaves contiguous
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
};

NNIndex build_nn_index(PointCloud cloud);

}  // namespace brachy
