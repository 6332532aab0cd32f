#include "brachy/collision/obb_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace brachy {

Obb fit_obb(const TriangleMesh& mesh, std::span<const int> triangles) {
  if (triangles.empty()) throw InputError("cannot fit a box to zero triangles");
  std::vector<int> ids;
  ids.reserve(triangles.size() * 3);
  for (int t : triangles) {
    for (int k = 0; k < 3; ++k) ids.push_back(mesh.triangles(k, t));
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  Vec3d mean = Vec3d::Zero();
  for (int v : ids) mean += mesh.vertices.col(v);
  mean /= double(ids.size());
  Mat3d cov = Mat3d::Zero();
  for (int v : ids) {
    const Vec3d d = mesh.vertices.col(v) - mean;
    cov += d * d.transpose();
  }
  cov /= double(ids.size());

  Mat3d axes = Mat3d::Identity();
  const Eigen::SelfAdjointEigenSolver<Mat3d> eig(cov);
  const Vec3d ev = eig.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  if (eig.info() == Eigen::Success && scale > 1e-18 && (ev[2] - ev[0]) > 1e-9 * scale) {
    axes = eig.eigenvectors();
    if (axes.determinant() < 0) axes.col(0) = -axes.col(0);
  }

  Vec3d lo = Vec3d::Constant(std::numeric_limits<double>::infinity());
  Vec3d hi = -lo;
  for (int v : ids) {
    const Vec3d s = axes.transpose() * mesh.vertices.col(v);
    lo = lo.cwiseMin(s);
    hi = hi.cwiseMax(s);
  }
  Obb box;
  box.axes = axes;
  box.center = axes * (0.5 * (lo + hi));
  box.half_extents = 0.5 * (hi - lo);
  return box;
}

bool obb_disjoint(const Obb& a, const Obb& b, const RigidTransformd& b_to_a) {
  const Mat3d rb = b_to_a.rotation_matrix() * b.axes;  // b's axes in a's frame
  const Vec3d cb = b_to_a(b.center);
  const Vec3d d = cb - a.center;

  auto separated = [&](const Vec3d& axis) {
    const double ra = (a.axes.transpose() * axis).cwiseAbs().dot(a.half_extents);
    const double rbb = (rb.transpose() * axis).cwiseAbs().dot(b.half_extents);
    return std::abs(d.dot(axis)) > ra + rbb + kCollisionEpsilon;
  };

  for (int i = 0; i < 3; ++i) {
    if (separated(a.axes.col(i))) return true;
  }
  for (int i = 0; i < 3; ++i) {
    if (separated(rb.col(i))) return true;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Vec3d axis = a.axes.col(i).cross(rb.col(j));
      const double n = axis.norm();
      if (n < kCollisionEpsilon) continue;
      if (separated(axis / n)) return true;
    }
  }
  return false;
}

namespace {

constexpr double kPlaneEpsilon = 1e-9;

// Extent of the triangle's crossing with the other triangle's plane,
// projected onto the intersection line.
bool plane_interval(const Vec3d (&v)[3], const double (&dist)[3], const Vec3d& line, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  bool any = false;
  for (int i = 0; i < 3; ++i) {
    if (dist[i] == 0) {
      const double p = line.dot(v[i]);
      lo = std::min(lo, p);
      hi = std::max(hi, p);
      any = true;
    }
    const int j = (i + 1) % 3;
    if ((dist[i] > 0 && dist[j] < 0) || (dist[i] < 0 && dist[j] > 0)) {
      const double s = dist[i] / (dist[i] - dist[j]);
      const double p = line.dot(v[i] + s * (v[j] - v[i]));
      lo = std::min(lo, p);
      hi = std::max(hi, p);
      any = true;
    }
  }
  return any;
}

double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

bool on_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p, double eps) {
  return std::abs(orient2d(a, b, p)) <= eps && p.x() >= std::min(a.x(), b.x()) - eps &&
         p.x() <= std::max(a.x(), b.x()) + eps && p.y() >= std::min(a.y(), b.y()) - eps &&
         p.y() <= std::max(a.y(), b.y()) + eps;
}

bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                        const Eigen::Vector2d& q2, double eps) {
  const double d1 = orient2d(q1, q2, p1), d2 = orient2d(q1, q2, p2);
  const double d3 = orient2d(p1, p2, q1), d4 = orient2d(p1, p2, q2);
  if (((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))) {
    return true;
  }
  return on_segment(q1, q2, p1, eps) || on_segment(q1, q2, p2, eps) || on_segment(p1, p2, q1, eps) ||
         on_segment(p1, p2, q2, eps);
}

bool point_in_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d (&t)[3], double eps) {
  const double a = orient2d(t[0], t[1], p), b = orient2d(t[1], t[2], p), c = orient2d(t[2], t[0], p);
  return (a >= -eps && b >= -eps && c >= -eps) || (a <= eps && b <= eps && c <= eps);
}

bool coplanar_intersect(const Vec3d& n, const Vec3d (&a)[3], const Vec3d (&b)[3]) {
  int drop;
  n.cwiseAbs().maxCoeff(&drop);
  const int u = (drop + 1) % 3, v = (drop + 2) % 3;
  Eigen::Vector2d pa[3], pb[3];
  double extent = 0;
  for (int i = 0; i < 3; ++i) {
    pa[i] = {a[i][u], a[i][v]};
    pb[i] = {b[i][u], b[i][v]};
    extent = std::max({extent, pa[i].cwiseAbs().maxCoeff(), pb[i].cwiseAbs().maxCoeff()});
  }
  const double eps = kPlaneEpsilon * std::max(1.0, extent);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (segments_intersect(pa[i], pa[(i + 1) % 3], pb[j], pb[(j + 1) % 3], eps)) return true;
    }
  }
  return point_in_triangle(pa[0], pb, eps) || point_in_triangle(pb[0], pa, eps);
}

}  // namespace

bool tri_tri_intersect(const Vec3d& a0, const Vec3d& a1, const Vec3d& a2, const Vec3d& b0, const Vec3d& b1,
                       const Vec3d& b2) {
  const Vec3d a[3] = {a0, a1, a2};
  const Vec3d b[3] = {b0, b1, b2};

  const Vec3d nb_raw = (b1 - b0).cross(b2 - b0);
  const Vec3d na_raw = (a1 - a0).cross(a2 - a0);
  const double nb_len = nb_raw.norm(), na_len = na_raw.norm();
  if (!(nb_len > 0) || !(na_len > 0)) return false;  // degenerate input
  const Vec3d nb = nb_raw / nb_len, na = na_raw / na_len;

  double da[3], db[3];
  for (int i = 0; i < 3; ++i) {
    da[i] = nb.dot(a[i] - b0);
    if (std::abs(da[i]) < kPlaneEpsilon) da[i] = 0;
  }
  if ((da[0] > 0 && da[1] > 0 && da[2] > 0) || (da[0] < 0 && da[1] < 0 && da[2] < 0)) return false;
  for (int i = 0; i < 3; ++i) {
    db[i] = na.dot(b[i] - a0);
    if (std::abs(db[i]) < kPlaneEpsilon) db[i] = 0;
  }
  if ((db[0] > 0 && db[1] > 0 && db[2] > 0) || (db[0] < 0 && db[1] < 0 && db[2] < 0)) return false;

  if ((da[0] == 0 && da[1] == 0 && da[2] == 0) || (db[0] == 0 && db[1] == 0 && db[2] == 0)) {
    return coplanar_intersect(na, a, b);
  }

  const Vec3d line = na.cross(nb);
  if (line.norm() < kPlaneEpsilon) return coplanar_intersect(na, a, b);  // parallel planes within slack
  double alo, ahi, blo, bhi;
  if (!plane_interval(a, da, line, alo, ahi) || !plane_interval(b, db, line, blo, bhi)) return false;
  return std::max(alo, blo) <= std::min(ahi, bhi) + kPlaneEpsilon;
}

ObbTree::ObbTree(TriangleMesh mesh) : mesh_(std::make_shared<const TriangleMesh>(std::move(mesh))) {
  if (mesh_->triangle_count() == 0) throw InputError("OBB tree needs at least one triangle");
  order_.resize(std::size_t(mesh_->triangle_count()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * order_.size());
  build(0, int(order_.size()));
}

int ObbTree::build(int first, int count) {
  const int id = int(nodes_.size());
  nodes_.push_back({});
  const std::span<const int> tris(order_.data() + first, std::size_t(count));
  Node node;
  node.box = fit_obb(*mesh_, tris);
  node.first = first;
  node.count = count;
  if (count == 1) {
    node.triangle = order_[std::size_t(first)];
    nodes_[std::size_t(id)] = node;
    return id;
  }

  int axis;
  node.box.half_extents.maxCoeff(&axis);
  const Vec3d dir = node.box.axes.col(axis);
  const TriangleMesh& m = *mesh_;
  auto proj = [&](int t) { return dir.dot(m.corner(t, 0) + m.corner(t, 1) + m.corner(t, 2)) / 3.0; };

  double mean = 0;
  for (int t : tris) mean += proj(t);
  mean /= count;
  auto begin = order_.begin() + first, end = begin + count;
  auto mid = std::partition(begin, end, [&](int t) { return proj(t) < mean; });
  int left_count = int(mid - begin);
  if (left_count == 0 || left_count == count) {
    left_count = count / 2;
    std::nth_element(begin, begin + left_count, end, [&](int x, int y) { return proj(x) < proj(y); });
  }
  const int left = build(first, left_count);
  const int right = build(first + left_count, count - left_count);
  node.left = left;
  node.right = right;
  nodes_[std::size_t(id)] = node;
  return id;
}

int ObbTree::depth() const {
  std::vector<std::pair<int, int>> stack{{0, 1}};
  int best = 0;
  while (!stack.empty()) {
    const auto [n, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const Node& node = nodes_[std::size_t(n)];
    if (!node.is_leaf()) {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return best;
}

std::size_t ObbTree::leaf_count() const {
  return std::size_t(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
}

ObbTree build_obb_tree(TriangleMesh mesh) { return ObbTree(std::move(mesh)); }

CollisionReport collide(const ObbTree& a, const RigidTransformd& pose_a, const ObbTree& b,
                        const RigidTransformd& pose_b, CollideMode mode) {
  CollisionReport report;
  const RigidTransformd b_to_a = compose(invert(pose_a), pose_b);
  const Mat3d rot = b_to_a.rotation_matrix();
  const TriangleMesh& ma = a.mesh();
  const TriangleMesh& mb = b.mesh();

  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [ia, ib] = stack.back();
    stack.pop_back();
    const auto& na = a.nodes()[std::size_t(ia)];
    const auto& nb = b.nodes()[std::size_t(ib)];
    ++report.node_tests;
    if (obb_disjoint(na.box, nb.box, b_to_a)) continue;

    if (na.is_leaf() && nb.is_leaf()) {
      const int ta = na.triangle, tb = nb.triangle;
      const Vec3d b0 = rot * mb.corner(tb, 0) + b_to_a.translation();
      const Vec3d b1 = rot * mb.corner(tb, 1) + b_to_a.translation();
      const Vec3d b2 = rot * mb.corner(tb, 2) + b_to_a.translation();
      if (tri_tri_intersect(ma.corner(ta, 0), ma.corner(ta, 1), ma.corner(ta, 2), b0, b1, b2)) {
        report.intersecting = true;
        report.contact_pairs.emplace_back(ta, tb);
        if (mode == CollideMode::FirstContact) return report;
      }
      continue;
    }
    const bool split_b = na.is_leaf() || (!nb.is_leaf() && nb.box.volume() >= na.box.volume());
    if (split_b) {
      stack.push_back({ia, nb.right});
      stack.push_back({ia, nb.left});
    } else {
      stack.push_back({na.right, ib});
      stack.push_back({na.left, ib});
    }
  }
  if (mode == CollideMode::AllPairs) std::sort(report.contact_pairs.begin(), report.contact_pairs.end());
  return report;
}

}  // namespace brachy
