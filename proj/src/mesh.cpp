#include "brachy/geom/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <unordered_map>

namespace brachy {

TriangleMesh MeshBuilder::build() const {
  TriangleMesh m;
  m.vertices.resize(3, Eigen::Index(verts_.size()));
  for (std::size_t i = 0; i < verts_.size(); ++i) m.vertices.col(Eigen::Index(i)) = verts_[i];
  m.triangles.resize(3, Eigen::Index(tris_.size()));
  for (std::size_t i = 0; i < tris_.size(); ++i) {
    m.triangles.col(Eigen::Index(i)) << tris_[i][0], tris_[i][1], tris_[i][2];
  }
  return m;
}

double triangle_area(const Vec3d& a, const Vec3d& b, const Vec3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

MeshValidation validate_mesh(TriangleMesh mesh) {
  if (!mesh.vertices.allFinite()) throw InputError("mesh has non-finite vertex coordinates");
  if (mesh.triangle_count() > 0 && mesh.vertex_count() < 3) {
    throw InputError("mesh has triangles but fewer than 3 vertices");
  }
  const Eigen::Index nv = mesh.vertex_count();
  MeshValidation out;
  std::vector<Eigen::Index> keep;
  keep.reserve(std::size_t(mesh.triangle_count()));
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const int idx = mesh.triangles(k, t);
      if (idx < 0 || idx >= nv) {
        throw InputError("triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) +
                         " of " + std::to_string(nv));
      }
    }
    if (triangle_area(mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2)) > kDegenerateArea) {
      keep.push_back(t);
    } else {
      ++out.dropped_degenerate;
    }
  }
  if (out.dropped_degenerate > 0) {
    Triangles kept(3, Eigen::Index(keep.size()));
    std::optional<PointCloud> normals;
    if (mesh.normals) normals.emplace(3, Eigen::Index(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
      kept.col(Eigen::Index(i)) = mesh.triangles.col(keep[i]);
      if (normals) normals->col(Eigen::Index(i)) = mesh.normals->col(keep[i]);
    }
    mesh.triangles = std::move(kept);
    mesh.normals = std::move(normals);
  }
  out.mesh = std::move(mesh);
  return out;
}

TriangleMesh transform_mesh(const RigidTransformd& t, const TriangleMesh& mesh) {
  TriangleMesh out;
  out.vertices = transform_points(t, mesh.vertices);
  out.triangles = mesh.triangles;
  if (mesh.normals) out.normals = PointCloud(t.rotation_matrix() * *mesh.normals);
  return out;
}

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts) {
  Eigen::Index nv = 0, nt = 0;
  for (const auto& p : parts) {
    nv += p.vertex_count();
    nt += p.triangle_count();
  }
  TriangleMesh out;
  out.vertices.resize(3, nv);
  out.triangles.resize(3, nt);
  Eigen::Index vo = 0, to = 0;
  for (const auto& p : parts) {
    out.vertices.middleCols(vo, p.vertex_count()) = p.vertices;
    out.triangles.middleCols(to, p.triangle_count()) = p.triangles.array() + int(vo);
    vo += p.vertex_count();
    to += p.triangle_count();
  }
  return out;
}

double mesh_volume(const TriangleMesh& mesh) {
  double v = 0;
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    v += mesh.corner(t, 0).dot(mesh.corner(t, 1).cross(mesh.corner(t, 2)));
  }
  return v / 6.0;
}

AlignedBox bounding_box(const TriangleMesh& mesh) {
  if (mesh.vertex_count() == 0) return {Vec3d::Zero(), Vec3d::Zero()};
  return {mesh.vertices.rowwise().minCoeff(), mesh.vertices.rowwise().maxCoeff()};
}

TopologyStats topology(const TriangleMesh& mesh) {
  std::unordered_map<std::uint64_t, int> edge_use;
  std::vector<bool> used(std::size_t(mesh.vertex_count()), false);
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const auto a = std::uint32_t(mesh.triangles(k, t));
      const auto b = std::uint32_t(mesh.triangles((k + 1) % 3, t));
      used[a] = true;
      const std::uint64_t key = (std::uint64_t(std::min(a, b)) << 32) | std::max(a, b);
      ++edge_use[key];
    }
  }
  TopologyStats s;
  s.faces = std::size_t(mesh.triangle_count());
  s.vertices = std::size_t(std::count(used.begin(), used.end(), true));
  s.edges = edge_use.size();
  for (const auto& [key, n] : edge_use) {
    if (n == 1) ++s.boundary_edges;
    if (n > 2) ++s.nonmanifold_edges;
  }
  return s;
}

TriangleMesh box_mesh(const Vec3d& lo, const Vec3d& hi) {
  MeshBuilder b;
  for (int i = 0; i < 8; ++i) {
    b.add_vertex(Vec3d((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z()));
  }
  b.add_quad(0, 2, 3, 1);  // -z
  b.add_quad(4, 5, 7, 6);  // +z
  b.add_quad(0, 1, 5, 4);  // -y
  b.add_quad(2, 6, 7, 3);  // +y
  b.add_quad(0, 4, 6, 2);  // -x
  b.add_quad(1, 3, 7, 5);  // +x
  return b.build();
}

namespace {

// Orthonormal pair spanning the plane perpendicular to `n` (unit).
std::pair<Vec3d, Vec3d> perpendicular_basis(const Vec3d& n) {
  const Vec3d helper = std::abs(n.x()) < 0.9 ? Vec3d::UnitX() : Vec3d::UnitY();
  const Vec3d u = n.cross(helper).normalized();
  return {u, n.cross(u)};
}

}  // namespace

TriangleMesh prism_mesh(const Vec3d& base, const Vec3d& axis, double radius, int sides) {
  if (sides < 3) throw InputError("prism needs at least 3 sides");
  const double len = axis.norm();
  if (!(len > 0)) throw InputError("prism axis has zero length");
  const Vec3d n = axis / len;
  const auto [u, v] = perpendicular_basis(n);
  MeshBuilder b;
  for (int i = 0; i < sides; ++i) {
    const double a = 2 * std::numbers::pi * i / sides;
    const Vec3d off = radius * (std::cos(a) * u + std::sin(a) * v);
    b.add_vertex(base + off);
    b.add_vertex(base + axis + off);
  }
  // u, v, n is right-handed, so increasing angle is CCW about n.
  for (int i = 0; i < sides; ++i) {
    const int j = (i + 1) % sides;
    b.add_quad(2 * i, 2 * j, 2 * j + 1, 2 * i + 1);
  }
  for (int i = 1; i + 1 < sides; ++i) {
    b.add_triangle(0, 2 * (i + 1), 2 * i);          // base cap faces -n
    b.add_triangle(1, 2 * i + 1, 2 * (i + 1) + 1);  // top cap faces +n
  }
  return b.build();
}

TriangleMesh uv_sphere(const Vec3d& c, double r, int stacks, int slices) {
  if (stacks < 2 || slices < 3) throw InputError("uv sphere needs stacks >= 2, slices >= 3");
  MeshBuilder b;
  const int north = b.add_vertex(c + Vec3d(0, 0, r));
  for (int i = 1; i < stacks; ++i) {
    const double phi = std::numbers::pi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double theta = 2 * std::numbers::pi * j / slices;
      b.add_vertex(c + r * Vec3d(std::sin(phi) * std::cos(theta), std::sin(phi) * std::sin(theta), std::cos(phi)));
    }
  }
  const int south = b.add_vertex(c - Vec3d(0, 0, r));
  auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) {
    b.add_triangle(north, ring(1, j), ring(1, j + 1));
    b.add_triangle(south, ring(stacks - 1, j + 1), ring(stacks - 1, j));
  }
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) b.add_quad(ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1));
  }
  return b.build();
}

TriangleMesh icosphere(const Vec3d& c, double r, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3d> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                              {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                           {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                           {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                           {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[std::size_t(a)] + verts[std::size_t(b)]).normalized());
      const int id = int(verts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  MeshBuilder b;
  for (const auto& v : verts) b.add_vertex(c + r * v);
  for (const auto& f : faces) b.add_triangle(f[0], f[1], f[2]);
  return b.build();
}

}  // namespace brachy
