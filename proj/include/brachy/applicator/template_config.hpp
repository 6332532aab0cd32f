#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "brachy/geom/transform.hpp"

namespace brachy {

/// A labelled point on the template used for landmark registration.
struct LandmarkFeature {
  std::string id;
  Vec3d point = Vec3d::Zero();  // model frame, mm
};

/// Parametric template and obturator. Model frame: plate centred on the
/// origin, superior surface at z = 0, plate occupying z in [-thickness, 0],
/// needles inserted along -z. Rows are lettered from A at +y, columns
/// numbered from 1 at -x.
struct TemplateConfig {
  int rows = 13;
  int cols = 13;
  double pitch = 10.0;
  double hole_radius = 1.65;
  double plate_width = 140.0;   // x extent
  double plate_height = 140.0;  // y extent
  double plate_thickness = 20.0;
  double obturator_hole_radius = 10.0;
  double obturator_radius = 9.5;
  double obturator_length = 120.0;
  int bore_sides = 12;

  double needle_radius = 1.0;
  int needle_sides = 12;
  double max_needle_length = 200.0;

  /// Empty means the default corner features (see default_landmarks).
  std::vector<LandmarkFeature> landmarks;

  /// Optional STL files replacing the parametric meshes.
  std::optional<std::string> template_stl;
  std::optional<std::string> obturator_stl;

  /// Throws InputError on any violated invariant.
  void validate() const;
  /// Configured landmarks, or the entries of the first row's first and last
  /// holes and the last row's first hole.
  std::vector<LandmarkFeature> effective_landmarks() const;
  LandmarkFeature landmark(const std::string& id) const;
};

std::string hole_label(int row, int col);

nlohmann::ordered_json to_json(const TemplateConfig& c);
TemplateConfig template_config_from_json(const nlohmann::json& j);
TemplateConfig load_template_config(const std::string& path);
/// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const TemplateConfig& c);

struct Hole {
  std::string id;
  Vec3d entry = Vec3d::Zero();                // on the superior surface
  Vec3d direction = Vec3d(0.0, 0.0, -1.0);    // unit insertion axis
};

/// Row-major lattice of holes centred on the plate, skipping positions
/// within (obturator hole radius + hole radius) of the centre.
std::vector<Hole> hole_grid(const TemplateConfig& config);
const Hole& find_hole(const std::vector<Hole>& holes, const std::string& id);

}  // namespace brachy
