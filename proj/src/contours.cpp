#include "brachy/geom/contours.hpp"

#include <cmath>
#include <unordered_map>

namespace brachy {

PlaneAxis parse_plane_axis(std::string_view name) {
  if (name == "axial") return PlaneAxis::Axial;
  if (name == "sagittal") return PlaneAxis::Sagittal;
  if (name == "coronal") return PlaneAxis::Coronal;
  throw InputError("unknown plane axis '" + std::string(name) + "'");
}

std::string_view to_string(PlaneAxis axis) {
  switch (axis) {
    case PlaneAxis::Axial:
      return "axial";
    case PlaneAxis::Sagittal:
      return "sagittal";
    case PlaneAxis::Coronal:
      return "coronal";
  }
  return "?";
}

int normal_axis(PlaneAxis axis) {
  switch (axis) {
    case PlaneAxis::Axial:
      return 2;
    case PlaneAxis::Sagittal:
      return 0;
    case PlaneAxis::Coronal:
      return 1;
  }
  return 2;
}

std::pair<int, int> in_plane_axes(PlaneAxis axis) {
  switch (axis) {
    case PlaneAxis::Axial:
      return {0, 1};
    case PlaneAxis::Sagittal:
      return {1, 2};
    case PlaneAxis::Coronal:
      return {0, 2};
  }
  return {0, 1};
}

double Polyline::length() const {
  double len = 0;
  for (std::size_t i = 1; i < points.size(); ++i) len += (points[i] - points[i - 1]).norm();
  if (closed && points.size() > 1) len += (points.front() - points.back()).norm();
  return len;
}

namespace {

// Endpoint merging on a 2D hash grid with cell = tolerance.
class NodeIndex {
 public:
  explicit NodeIndex(double tol) : tol_(tol), inv_(1.0 / tol) {}

  int find_or_add(const Eigen::Vector2d& p) {
    const std::int64_t cx = std::int64_t(std::floor(p.x() * inv_));
    const std::int64_t cy = std::int64_t(std::floor(p.y() * inv_));
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (int id : it->second) {
          if ((points[std::size_t(id)] - p).norm() <= tol_) return id;
        }
      }
    }
    points.push_back(p);
    const int id = int(points.size()) - 1;
    cells_[key(cx, cy)].push_back(id);
    return id;
  }

  std::vector<Eigen::Vector2d> points;

 private:
  static std::uint64_t key(std::int64_t x, std::int64_t y) {
    return (std::uint64_t(x) * 0x9E3779B97F4A7C15ull) ^ (std::uint64_t(y) + 0x632BE59BD9B4E019ull);
  }
  double tol_, inv_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace

std::vector<Polyline> mesh_plane_contours(const TriangleMesh& mesh, const RigidTransformd& pose, PlaneAxis axis,
                                          double offset, double join_tolerance) {
  const int n = normal_axis(axis);
  const auto [iu, iv] = in_plane_axes(axis);
  const PointCloud world = transform_points(pose, mesh.vertices);

  NodeIndex nodes(join_tolerance);
  std::vector<std::array<int, 2>> segments;

  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    Vec3d p[3];
    double d[3];
    for (int k = 0; k < 3; ++k) {
      p[k] = world.col(mesh.triangles(k, t));
      d[k] = p[k][n] - offset;
    }
    // Vertices exactly on the plane count as above it, so a shared edge is
    // cut by exactly one pair of triangles and no point is emitted twice.
    Eigen::Vector2d hits[2];
    int nhit = 0;
    for (int k = 0; k < 3; ++k) {
      const int a = k, b = (k + 1) % 3;
      const bool above_a = d[a] >= 0, above_b = d[b] >= 0;
      if (above_a == above_b) continue;
      // Interpolate from the lower vertex index so both triangles sharing an
      // edge compute identical coordinates.
      const int lo = mesh.triangles(a, t) < mesh.triangles(b, t) ? a : b;
      const int hi = lo == a ? b : a;
      const double s = d[lo] / (d[lo] - d[hi]);
      const Vec3d x = p[lo] + s * (p[hi] - p[lo]);
      if (nhit < 2) hits[nhit] = Eigen::Vector2d(x[iu], x[iv]);
      ++nhit;
    }
    if (nhit != 2) continue;
    const int a = nodes.find_or_add(hits[0]);
    const int b = nodes.find_or_add(hits[1]);
    if (a != b) segments.push_back({a, b});
  }

  // Chain segments through shared nodes.
  std::vector<std::vector<int>> adjacency(nodes.points.size());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    adjacency[std::size_t(segments[s][0])].push_back(int(s));
    adjacency[std::size_t(segments[s][1])].push_back(int(s));
  }
  std::vector<bool> used(segments.size(), false);
  auto other = [&](int seg, int node) { return segments[std::size_t(seg)][0] == node ? segments[std::size_t(seg)][1] : segments[std::size_t(seg)][0]; };
  auto next_unused = [&](int node) {
    for (int s : adjacency[std::size_t(node)]) {
      if (!used[std::size_t(s)]) return s;
    }
    return -1;
  };

  std::vector<Polyline> out;
  auto trace = [&](int start_seg, int start_node) {
    std::vector<int> chain{start_node};
    int seg = start_seg, node = start_node;
    while (seg >= 0) {
      used[std::size_t(seg)] = true;
      node = other(seg, node);
      chain.push_back(node);
      seg = next_unused(node);
    }
    Polyline pl;
    pl.closed = chain.size() > 2 && chain.front() == chain.back();
    if (pl.closed) chain.pop_back();
    for (int id : chain) pl.points.push_back(nodes.points[std::size_t(id)]);
    out.push_back(std::move(pl));
  };
  // Open chains first, starting from their free ends.
  for (std::size_t node = 0; node < adjacency.size(); ++node) {
    if (adjacency[node].size() % 2 == 1) {
      const int seg = next_unused(int(node));
      if (seg >= 0) trace(seg, int(node));
    }
  }
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (!used[s]) trace(int(s), segments[s][0]);
  }
  return out;
}

}  // namespace brachy
