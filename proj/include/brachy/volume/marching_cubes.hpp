#pragma once

#include "brachy/geom/mesh.hpp"
#include "brachy/volume/scalar_volume.hpp"

namespace brachy {

/// Lorensen–Cline isosurface using the classic 256-case table. Crossing
/// vertices are linearly interpolated along cell edges and shared between
/// neighbouring cells. Triangle normals point toward lower scalar values.
/// Returns an empty mesh when `iso` is outside the value range or any
/// dimension is below 2.
TriangleMesh marching_cubes(const ScalarVolume& vol, double iso);

}  // namespace brachy
