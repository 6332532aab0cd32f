#include "brachy/applicator/needles.hpp"

#include <algorithm>

namespace brachy {

NeedleGeometry needle_section(const Hole& hole, double start_depth, double end_depth, double radius, int sides) {
  if (!(start_depth >= 0)) throw InputError("needle section must start at depth >= 0");
  if (!(end_depth > start_depth)) throw InputError("needle depth must be positive");
  NeedleGeometry g;
  g.axis.start = hole.entry + start_depth * hole.direction;
  g.axis.end = hole.entry + end_depth * hole.direction;
  g.mesh = prism_mesh(g.axis.start, g.axis.end - g.axis.start, std::max(radius, kMinNeedleMeshRadius), sides);
  return g;
}

NeedleGeometry needle_geometry(const Hole& hole, double depth, double radius, int sides) {
  if (!(depth > 0)) throw InputError("needle depth must be positive");
  NeedleGeometry g = needle_section(hole, 0.0, depth, radius, sides);
  g.axis.start = hole.entry;
  return g;
}

NeedleCollider::NeedleCollider(const TemplateConfig& config, const RigidTransformd& template_pose,
                               const ObbTree& tumor)
    : config_(config), pose_(template_pose), tumor_(tumor) {}

RigidTransformd NeedleCollider::hole_pose(const Hole& hole) const {
  const auto align = Eigen::Quaterniond::FromTwoVectors(Vec3d(0, 0, -1), hole.direction.normalized());
  return compose(pose_, RigidTransformd::from_normalized(align, hole.entry));
}

bool NeedleCollider::section_hits(const Hole& hole, double start, double end) const {
  const Hole canonical{hole.id, Vec3d::Zero(), Vec3d(0, 0, -1)};
  const ObbTree needle(needle_section(canonical, start, end, config_.needle_radius, config_.needle_sides).mesh);
  return collide(needle, hole_pose(hole), tumor_, RigidTransformd::identity(), CollideMode::FirstContact).intersecting;
}

bool NeedleCollider::hits(const Hole& hole, double depth) const {
  if (!(depth > 0)) throw InputError("needle depth must be positive");
  return section_hits(hole, 0.0, depth);
}

std::vector<std::string> select_needles(const TemplateConfig& config, const RigidTransformd& template_pose,
                                        double depth, const ObbTree& tumor) {
  if (!(depth > 0)) throw InputError("needle depth must be positive");
  if (depth > config.max_needle_length) throw InputError("needle depth exceeds the configured maximum");
  const Hole canonical{"", Vec3d::Zero(), Vec3d(0, 0, -1)};
  const ObbTree needle(needle_geometry(canonical, depth, config.needle_radius, config.needle_sides).mesh);
  std::vector<std::string> out;
  for (const auto& hole : hole_grid(config)) {
    const auto align = Eigen::Quaterniond::FromTwoVectors(Vec3d(0, 0, -1), hole.direction.normalized());
    const RigidTransformd pose = compose(template_pose, RigidTransformd::from_normalized(align, hole.entry));
    if (collide(needle, pose, tumor, RigidTransformd::identity(), CollideMode::FirstContact).intersecting) {
      out.push_back(hole.id);
    }
  }
  return out;
}

std::optional<DepthSpan> intersection_span(const TemplateConfig& config, const Hole& hole,
                                           const RigidTransformd& template_pose, double depth_max,
                                           const ObbTree& tumor, double resolution) {
  if (!(depth_max > 0)) throw InputError("maximum depth must be positive");
  if (!(resolution > 0)) throw InputError("span resolution must be positive");
  const NeedleCollider collider(config, template_pose, tumor);
  if (!collider.hits(hole, depth_max)) return std::nullopt;

  // Shallowest contact: smallest depth d with needle [0, d] touching.
  double lo = 0, hi = depth_max;
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    if (mid > 0 && collider.hits(hole, mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  const double entry = hi;

  // Deepest contact: largest s with needle section [s, depth_max] touching.
  const double min_len = std::min(resolution * 0.5, 1e-3);
  lo = entry - resolution;
  hi = depth_max;
  if (collider.section_hits(hole, depth_max - min_len, depth_max)) {
    return DepthSpan{entry, depth_max};
  }
  lo = std::max(0.0, lo);
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    if (collider.section_hits(hole, mid, depth_max)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return DepthSpan{entry, lo};
}

}  // namespace brachy
