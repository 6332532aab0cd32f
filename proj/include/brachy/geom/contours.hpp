#pragma once

#include <string_view>
#include <vector>

#include "brachy/geom/mesh.hpp"

namespace brachy {

/// Anatomical planes in RAS: axial is z = offset, sagittal x = offset,
/// coronal y = offset.
enum class PlaneAxis { Axial, Sagittal, Coronal };

PlaneAxis parse_plane_axis(std::string_view name);
std::string_view to_string(PlaneAxis axis);

/// World axis index normal to the plane.
int normal_axis(PlaneAxis axis);
/// World axis indices used as in-plane (u, v) coordinates:
/// axial (x, y), sagittal (y, z), coronal (x, z).
std::pair<int, int> in_plane_axes(PlaneAxis axis);

struct Polyline {
  std::vector<Eigen::Vector2d> points;  // in-plane coordinates, mm
  bool closed = false;                  // last point joins back to first

  double length() const;
};

/// Section of the posed mesh by an axis-aligned plane. Crossing segments
/// are chained wherever endpoints coincide within `join_tolerance`.
std::vector<Polyline> mesh_plane_contours(const TriangleMesh& mesh, const RigidTransformd& pose, PlaneAxis axis,
                                          double offset, double join_tolerance = 1e-6);

}  // namespace brachy
