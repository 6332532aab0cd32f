#pragma once

#include <optional>
#include <string>
#include <vector>

#include "brachy/applicator/plan.hpp"
#include "brachy/applicator/template_config.hpp"
#include "brachy/applicator/template_model.hpp"
#include "brachy/collision/obb_tree.hpp"
#include "brachy/registration/icp.hpp"
#include "brachy/volume/scalar_volume.hpp"

namespace brachy {

/// One landmark pair: an image point and either a named model feature or
/// an explicit model point (which wins when both are present).
struct LandmarkPick {
  std::string feature;
  Vec3d image_point = Vec3d::Zero();
  std::optional<Vec3d> model_point;
};

/// Image-side point set for ICP: thresholded voxel centres, or the
/// vertices of the marching-cubes surface at the threshold.
enum class IcpSource { Voxels, Surface };
IcpSource parse_icp_source(std::string_view s);
std::string_view to_string(IcpSource s);

/// ICP moving set drawn from an (already cropped) volume.
PointCloud icp_image_points(const ScalarVolume& vol, double threshold, IcpSource source);

/// Tumour given either as an image-frame surface mesh or as a label map
/// that is meshed at `label_iso`.
struct TumorSource {
  std::optional<TriangleMesh> mesh;
  std::optional<ScalarVolume> label;
  double label_iso = 0.5;
};

struct PipelineInputs {
  ScalarVolume volume;
  TemplateConfig config;
  std::vector<LandmarkPick> landmarks;
  double threshold = 0;
  std::optional<RoiBox> roi;  // whole volume when absent
  TumorSource tumor;
  double depth = 0;  // mm
  IcpParams icp;
  IcpSource icp_source = IcpSource::Voxels;
  SurfaceSampling sampling;
};

/// File-backed variant used by the CLI; paths are read in the load stage.
struct PipelineFiles {
  std::string volume_path;
  TemplateConfig config;
  std::vector<LandmarkPick> landmarks;
  double threshold = 0;
  std::optional<RoiBox> roi;
  std::optional<std::string> tumor_mesh_path;
  std::optional<std::string> tumor_label_path;
  double depth = 0;
  IcpParams icp;
  IcpSource icp_source = IcpSource::Voxels;
  SurfaceSampling sampling;
};

struct StageTiming {
  std::string stage;
  double ms = 0;
};

struct PipelineReport {
  std::vector<StageTiming> timings;  // execution order
  double fre = 0;                    // mm
  double final_mse = 0;              // mm²
  int iterations = 0;
  std::size_t selected = 0;
  std::size_t image_points = 0;

  double total_ms() const;
};

struct PipelineResult {
  Plan plan;
  PipelineReport report;
};

// Stage names, in execution order.
inline constexpr const char* kStageLoad = "load";
inline constexpr const char* kStageLandmarks = "landmarks";
inline constexpr const char* kStageCrop = "crop";
inline constexpr const char* kStageThreshold = "threshold";
inline constexpr const char* kStageIcp = "icp";
inline constexpr const char* kStageTumor = "tumor";
inline constexpr const char* kStageSelect = "select";

/// load -> landmark registration -> crop -> threshold -> ICP -> tumour
/// tree -> needle selection. Any failure is rethrown as a StageError
/// naming the stage; nothing is returned on failure.
PipelineResult run_pipeline(const PipelineInputs& in);
PipelineResult run_pipeline(const PipelineFiles& in);

// Building blocks shared with the interactive session.

/// Initial pose (model -> image) from the picks plus its FRE.
std::pair<RigidTransformd, double> register_landmarks(const TemplateConfig& config,
                                                      const std::vector<LandmarkPick>& picks);
CorrespondencePairs landmark_pairs(const TemplateConfig& config, const std::vector<LandmarkPick>& picks);
/// ICP of image points against the superior-surface model points; the
/// returned pose maps model -> image.
std::pair<RigidTransformd, IcpResult> refine_pose(const TemplateConfig& config, const PointCloud& image_points,
                                                  const RigidTransformd& initial_pose, const IcpParams& params,
                                                  const SurfaceSampling& sampling);
/// Image-frame tumour mesh from the source (marching cubes on a label map).
TriangleMesh tumor_surface(const TumorSource& source);
/// One needle state per grid hole, selected where the needle at `depth`
/// hits the tumour.
std::vector<NeedleState> needle_states(const TemplateConfig& config, const RigidTransformd& pose, double depth,
                                       const ObbTree& tumor);
std::string volume_id(const ScalarVolume& vol);

/// Array of {source, target} pairs (model and image mm) or of
/// {feature, point} picks; an object with a "landmarks" array is also
/// accepted.
std::vector<LandmarkPick> landmarks_from_json(const nlohmann::json& j);
nlohmann::ordered_json landmarks_to_json(const std::vector<LandmarkPick>& picks);
nlohmann::ordered_json report_to_json(const PipelineReport& r);
/// "i0,j0,k0,i1,j1,k1" or a JSON {lower, upper} object.
RoiBox parse_roi(const std::string& text);
RoiBox roi_from_json(const nlohmann::json& j);

}  // namespace brachy
