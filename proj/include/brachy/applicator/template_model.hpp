#pragma once

#include "brachy/applicator/template_config.hpp"
#include "brachy/geom/mesh.hpp"

namespace brachy {

/// Closed plate with N-gon through-bores for every hole and the obturator
/// opening. Uses `config.template_stl` instead when set.
TriangleMesh template_mesh(const TemplateConfig& config);
/// Parametric plate only (ignores any STL override).
TriangleMesh parametric_template_mesh(const TemplateConfig& config);

/// N-gon prism of the obturator along the model z axis, z in
/// [-obturator_length, 0]. Uses `config.obturator_stl` instead when set.
TriangleMesh obturator_mesh(const TemplateConfig& config);
TriangleMesh parametric_obturator_mesh(const TemplateConfig& config);

/// Reference points for refinement: per hole, its entry point, `rim_points`
/// evenly spaced on the rim circle at z = 0, and axis samples every
/// `axis_step` mm down to the plate depth.
struct SurfaceSampling {
  int rim_points = 0;  // rings bias the fit along the bore when only the filled hole is imaged
  double axis_step = 0.5;  // 0 disables axis samples
};

PointCloud superior_surface_points(const TemplateConfig& config, const SurfaceSampling& sampling = {});

}  // namespace brachy
