#pragma once

#include <string>
#include <vector>

#include "brachy/applicator/template_config.hpp"
#include "brachy/registration/absolute_orientation.hpp"

namespace brachy {

constexpr int kPlanSchemaVersion = 1;

struct NeedleState {
  std::string hole_id;
  bool selected = false;
  double depth = 0;   // mm
  double radius = 0;  // mm

  bool operator==(const NeedleState&) const = default;
};

struct IcpSummary {
  int iterations = 0;
  double final_mse = 0;  // mm²
  std::string termination;

  bool operator==(const IcpSummary&) const = default;
};

struct PlanProvenance {
  std::string volume_id;
  CorrespondencePairs landmarks;
  IcpSummary icp;
  std::string config_hash;
};

/// Template pose (model -> image) plus the per-hole needle states.
struct Plan {
  int schema_version = kPlanSchemaVersion;
  RigidTransformd pose;
  std::vector<NeedleState> needles;
  PlanProvenance provenance;

  std::size_t selected_count() const;
};

/// Canonical JSON: fixed field order, floats at 9 significant digits.
std::string export_plan(const Plan& plan);
/// Throws SchemaError on version mismatch or unknown fields and InputError
/// on violated invariants (duplicate ids, negative depth, bad rotation).
Plan import_plan(const std::string& json_text);
/// Checks needle ids and depths against the template.
void validate_plan(const Plan& plan, const TemplateConfig& config);

/// Value rounded to 9 significant digits; the precision plans are stored at.
double round_sig9(double v);

}  // namespace brachy
