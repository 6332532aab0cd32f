#pragma once

#include <memory>
#include <span>
#include <vector>

#include "brachy/geom/mesh.hpp"

namespace brachy {

/// Slack used for box containment and separating-axis degeneracy (mm).
constexpr double kCollisionEpsilon = 1e-9;

/// Oriented box: points c + axes * s with |s_i| <= half_extents_i.
struct Obb {
  Vec3d center = Vec3d::Zero();
  Mat3d axes = Mat3d::Identity();  // orthonormal columns, right-handed
  Vec3d half_extents = Vec3d::Zero();

  double volume() const { return 8.0 * half_extents.prod(); }
  bool contains(const Vec3d& p, double slack = kCollisionEpsilon) const {
    return ((axes.transpose() * (p - center)).cwiseAbs() - half_extents).maxCoeff() <= slack;
  }
};

/// Box aligned with the principal axes of the covariance of the distinct
/// vertices referenced by `triangles`. Near-isotropic or vanishing
/// covariance falls back to world axes.
Obb fit_obb(const TriangleMesh& mesh, std::span<const int> triangles);

/// True iff one of the 15 separating-axis candidates separates `a` from
/// `b`, where `b_to_a` maps b's frame into a's frame. Edge-pair axes with
/// cross-product norm below 1e-9 are skipped.
bool obb_disjoint(const Obb& a, const Obb& b, const RigidTransformd& b_to_a);

/// Closed-set triangle intersection (touching counts), Möller's interval
/// test with a 2-D fallback for coplanar pairs.
bool tri_tri_intersect(const Vec3d& a0, const Vec3d& a1, const Vec3d& a2, const Vec3d& b0, const Vec3d& b1,
                       const Vec3d& b2);

/// Binary OBB hierarchy, one triangle per leaf. Holds its own copy of the
/// mesh; immutable after construction.
class ObbTree {
 public:
  struct Node {
    Obb box;
    int left = -1, right = -1;
    int triangle = -1;     // leaf payload
    int first = 0, count = 0;  // range in triangle_order()
    bool is_leaf() const { return left < 0; }
  };

  /// Throws InputError when the mesh has no triangles.
  explicit ObbTree(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return *mesh_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_.front(); }
  const std::vector<int>& triangle_order() const { return order_; }
  int depth() const;
  std::size_t leaf_count() const;

 private:
  int build(int first, int count);

  std::shared_ptr<const TriangleMesh> mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
};

ObbTree build_obb_tree(TriangleMesh mesh);

enum class CollideMode { FirstContact, AllPairs };

struct CollisionReport {
  bool intersecting = false;
  std::vector<std::pair<int, int>> contact_pairs;  // (triangle in A, triangle in B)
  long node_tests = 0;                             // box-pair tests performed
};

/// Dual-tree descent over the posed trees. Internal-internal pairs split
/// the larger box (the second tree on ties); leaf pairs run the triangle
/// test in A's model frame.
CollisionReport collide(const ObbTree& a, const RigidTransformd& pose_a, const ObbTree& b,
                        const RigidTransformd& pose_b, CollideMode mode = CollideMode::FirstContact);

}  // namespace brachy
