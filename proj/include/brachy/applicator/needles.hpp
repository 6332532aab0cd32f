#pragma once

#include <optional>
#include <string>
#include <vector>

#include "brachy/applicator/template_config.hpp"
#include "brachy/collision/obb_tree.hpp"

namespace brachy {

struct Segment {
  Vec3d start = Vec3d::Zero();
  Vec3d end = Vec3d::Zero();
};

struct NeedleGeometry {
  Segment axis;
  TriangleMesh mesh;  // closed N-gon prism, vertices on the needle radius
};

/// Smallest radius used for meshing; a zero-radius trajectory is meshed as
/// a prism this thin.
constexpr double kMinNeedleMeshRadius = 1e-4;

/// Needle occupying [start_depth, end_depth] along the hole axis. Throws
/// InputError when end_depth <= start_depth or start_depth < 0.
NeedleGeometry needle_section(const Hole& hole, double start_depth, double end_depth, double radius, int sides);
/// Full needle from the hole entry down to `depth`.
NeedleGeometry needle_geometry(const Hole& hole, double depth, double radius, int sides);

/// Shared per-call collision setup: one needle tree in a canonical frame
/// (entry at origin, axis along -z), posed per hole.
class NeedleCollider {
 public:
  NeedleCollider(const TemplateConfig& config, const RigidTransformd& template_pose, const ObbTree& tumor);

  /// Needle of the given depth through `hole` touches the tumor.
  bool hits(const Hole& hole, double depth) const;
  /// Needle portion [start, end] (depths in mm) touches the tumor.
  bool section_hits(const Hole& hole, double start, double end) const;

 private:
  RigidTransformd hole_pose(const Hole& hole) const;

  const TemplateConfig& config_;
  RigidTransformd pose_;
  const ObbTree& tumor_;
};

/// Ids of holes whose needle at `depth`, posed by `template_pose`, collides
/// with the tumor; in hole-grid order.
std::vector<std::string> select_needles(const TemplateConfig& config, const RigidTransformd& template_pose,
                                        double depth, const ObbTree& tumor);

struct DepthSpan {
  double entry = 0;  // mm along the hole axis
  double exit = 0;
};

/// Shallowest and deepest contact depth within [0, depth_max], bisected
/// to `resolution` mm. Empty when the full-length needle misses.
std::optional<DepthSpan> intersection_span(const TemplateConfig& config, const Hole& hole,
                                           const RigidTransformd& template_pose, double depth_max,
                                           const ObbTree& tumor, double resolution = 0.1);

}  // namespace brachy
