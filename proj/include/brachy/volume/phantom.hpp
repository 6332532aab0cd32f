#pragma once

#include <cstdint>

#include <json.hpp>

#include "brachy/applicator/template_config.hpp"
#include "brachy/geom/mesh.hpp"
#include "brachy/registration/absolute_orientation.hpp"
#include "brachy/volume/scalar_volume.hpp"

namespace brachy {

/// Synthetic scan: dark background, bright lubricant-filled hole cylinders
/// rendered under `pose`, a mid-intensity spherical tumour, additive
/// Gaussian noise clamped to the voxel type.
struct PhantomSpec {
  TemplateConfig config;
  RigidTransformd pose;  // template model -> image
  Index3 dims{161, 161, 121};
  Vec3d spacing = Vec3d::Ones();
  Vec3d origin{-80.0, -80.0, -40.0};
  VoxelType type = VoxelType::Int16;
  double background = 100.0;
  double hole_intensity = 1000.0;
  double tumor_intensity = 400.0;
  Vec3d tumor_center{17.0, -13.0, 5.0};  // image frame, mm
  double tumor_radius = 14.0;
  int tumor_subdivisions = 4;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;

  /// Threshold separating hole voxels from tumour and background.
  double hole_threshold() const { return 0.5 * (hole_intensity + std::max(background, tumor_intensity)); }
};

/// Default spec: template tilted a few degrees and lifted so the tumour
/// sits about 55 mm beyond the superior surface.
PhantomSpec default_phantom_spec();

struct PhantomScene {
  ScalarVolume volume;
  RigidTransformd true_pose;
  TriangleMesh tumor_mesh;  // image frame
  Vec3d tumor_center = Vec3d::Zero();
  double tumor_radius = 0;
  CorrespondencePairs landmark_truth;
};

/// Throws InputError if the template or tumour falls outside the volume.
PhantomScene generate_phantom(const PhantomSpec& spec);

/// uint8 label map (1 inside the tumour ball) on the scene's grid.
ScalarVolume tumor_label_volume(const PhantomScene& scene);

/// Holes whose needle (a capsule of the configured radius from the entry
/// to `depth`) meets the ball; the closed-form reference for selection.
std::vector<std::string> analytic_hit_set(const TemplateConfig& config, const RigidTransformd& pose, double depth,
                                          const Vec3d& center, double radius);

nlohmann::ordered_json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

nlohmann::ordered_json transform_to_json(const RigidTransformd& t);
RigidTransformd transform_from_json(const nlohmann::json& j);

}  // namespace brachy
