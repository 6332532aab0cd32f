#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

namespace brachy {

using Polygon2 = std::vector<Eigen::Vector2d>;

/// Ear-clipping triangulation of a simple polygon with holes. `outer` is
/// counter-clockwise, every hole clockwise and strictly inside `outer`.
/// Vertices are numbered outer first, then each hole in order; returned
/// triangles are counter-clockwise. No vertices are added, so boundary
/// points (including collinear ones) appear unchanged in the output.
std::vector<std::array<int, 3>> triangulate_polygon(const Polygon2& outer, const std::vector<Polygon2>& holes);

double signed_area(const Polygon2& poly);

}  // namespace brachy
