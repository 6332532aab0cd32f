#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "brachy/geom/transform.hpp"

namespace brachy {

using Triangles = Eigen::Matrix<int, 3, Eigen::Dynamic>;

/// Indexed triangle mesh. Vertices and triangle index triples are stored
/// column-wise. Counter-clockwise winding seen from outside.
struct TriangleMesh {
  PointCloud vertices{3, 0};
  Triangles triangles{3, 0};
  std::optional<PointCloud> normals;  // one per triangle when present

  Eigen::Index vertex_count() const { return vertices.cols(); }
  Eigen::Index triangle_count() const { return triangles.cols(); }
  bool empty() const { return triangles.cols() == 0; }

  Vec3d corner(Eigen::Index tri, int k) const { return vertices.col(triangles(k, tri)); }
};

/// Incremental builder; avoids reallocating Eigen storage per append.
class MeshBuilder {
 public:
  int add_vertex(const Vec3d& v) {
    verts_.push_back(v);
    return int(verts_.size()) - 1;
  }
  void add_triangle(int a, int b, int c) { tris_.push_back({a, b, c}); }
  void add_quad(int a, int b, int c, int d) {
    add_triangle(a, b, c);
    add_triangle(a, c, d);
  }
  std::size_t vertex_count() const { return verts_.size(); }
  TriangleMesh build() const;

 private:
  std::vector<Vec3d> verts_;
  std::vector<std::array<int, 3>> tris_;
};

constexpr double kDegenerateArea = 1e-12;

double triangle_area(const Vec3d& a, const Vec3d& b, const Vec3d& c);

struct MeshValidation {
  TriangleMesh mesh;
  std::size_t dropped_degenerate = 0;
};

/// Checks index bounds and finiteness (InputError on violation) and drops
/// triangles with area <= 1e-12 mm².
MeshValidation validate_mesh(TriangleMesh mesh);

TriangleMesh transform_mesh(const RigidTransformd& t, const TriangleMesh& mesh);
TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts);

/// Signed enclosed volume (divergence theorem); positive for outward winding.
double mesh_volume(const TriangleMesh& mesh);

struct AlignedBox {
  Vec3d min, max;
};
AlignedBox bounding_box(const TriangleMesh& mesh);

struct TopologyStats {
  std::size_t vertices = 0;  // vertices referenced by at least one triangle
  std::size_t edges = 0;
  std::size_t faces = 0;
  std::size_t boundary_edges = 0;     // used by one triangle
  std::size_t nonmanifold_edges = 0;  // used by three or more
  long euler() const { return long(vertices) - long(edges) + long(faces); }
  bool closed_manifold() const { return boundary_edges == 0 && nonmanifold_edges == 0; }
};
TopologyStats topology(const TriangleMesh& mesh);

// Primitives. All are closed and outward-wound.
TriangleMesh box_mesh(const Vec3d& min, const Vec3d& max);
/// N-gon prism with vertices on the circle of `radius` (inscribed) around
/// the segment base -> base + axis.
TriangleMesh prism_mesh(const Vec3d& base, const Vec3d& axis, double radius, int sides);
TriangleMesh uv_sphere(const Vec3d& center, double radius, int stacks, int slices);
/// Subdivided icosahedron with vertices on the sphere.
TriangleMesh icosphere(const Vec3d& center, double radius, int subdivisions);

}  // namespace brachy
