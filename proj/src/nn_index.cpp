#include "brachy/registration/nn_index.hpp"

#include <algorithm>
#include <numeric>

namespace brachy {

NNIndex::NNIndex(PointCloud points) : points_(std::move(points)) {
  if (points_.cols() == 0) throw InputError("nearest-neighbour index needs a non-empty cloud");
  if (!points_.allFinite()) throw InputError("non-finite point in cloud");
  order_.resize(std::size_t(points_.cols()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * order_.size() / kLeafSize + 1);
  build(0, std::int32_t(order_.size()));
  sorted_.resize(3, points_.cols());
  for (std::size_t i = 0; i < order_.size(); ++i) sorted_.col(Eigen::Index(i)) = points_.col(order_[i]);
}

std::int32_t NNIndex::build(std::int32_t begin, std::int32_t end) {
  const auto id = std::int32_t(nodes_.size());
  nodes_.push_back({begin, end});
  Vec3d lo = Vec3d::Constant(std::numeric_limits<double>::infinity());
  Vec3d hi = -lo;
  for (std::int32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.col(order_[std::size_t(i)]));
    hi = hi.cwiseMax(points_.col(order_[std::size_t(i)]));
  }
  nodes_[std::size_t(id)].lo = lo;
  nodes_[std::size_t(id)].hi = hi;
  if (end - begin <= kLeafSize) return id;

  int axis;
  if ((hi - lo).maxCoeff(&axis) <= 0) return id;  // all coincident: keep as leaf

  const std::int32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::int32_t a, std::int32_t b) { return points_(axis, a) < points_(axis, b); });
  nodes_[std::size_t(id)].axis = axis;
  nodes_[std::size_t(id)].split = points_(axis, order_[std::size_t(mid)]);
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[std::size_t(id)].left = left;
  nodes_[std::size_t(id)].right = right;
  return id;
}

double NNIndex::box_distance2(std::int32_t node_id, const Vec3d& q) const {
  const Node& n = nodes_[std::size_t(node_id)];
  return (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0).squaredNorm();
}

void NNIndex::search(std::int32_t node_id, const Vec3d& q, Neighbor& best) const {
  const Node& node = nodes_[std::size_t(node_id)];
  if (node.axis < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const double d2 = (sorted_.col(i) - q).squaredNorm();
      if (d2 <= best.squared_distance) {
        const std::int32_t idx = order_[std::size_t(i)];
        if (d2 < best.squared_distance || idx < best.index) best = {idx, d2};
      }
    }
    return;
  }
  std::int32_t first = node.left, second = node.right;
  double d_first = box_distance2(first, q), d_second = box_distance2(second, q);
  if (d_second < d_first) {
    std::swap(first, second);
    std::swap(d_first, d_second);
  }
  // Non-strict comparisons keep equidistant candidates reachable for the
  // lowest-index tie-break.
  if (d_first <= best.squared_distance) search(first, q, best);
  if (d_second <= best.squared_distance) search(second, q, best);
}

Neighbor NNIndex::nearest(const Vec3d& query) const {
  Neighbor best{-1, std::numeric_limits<double>::infinity()};
  search(0, query, best);
  return best;
}

Neighbor NNIndex::nearest(const Vec3d& query, Eigen::Index hint) const {
  if (hint < 0 || hint >= points_.cols()) return nearest(query);
  Neighbor best{hint, (points_.col(hint) - query).squaredNorm()};
  search(0, query, best);
  return best;
}

NNIndex build_nn_index(PointCloud cloud) { return NNIndex(std::move(cloud)); }

}  // namespace brachy
