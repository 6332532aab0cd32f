#include "brachy/service/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "brachy/applicator/needles.hpp"
#include "brachy/geom/stl.hpp"
#include "brachy/registration/absolute_orientation.hpp"
#include "brachy/volume/marching_cubes.hpp"
#include "brachy/volume/nrrd.hpp"

namespace brachy {

double PipelineReport::total_ms() const {
  double t = 0;
  for (const auto& s : timings) t += s.ms;
  return t;
}

namespace {

bool is_input_fault(const Error& e) {
  const std::string k = e.kind();
  return k == "input" || k == "parse" || k == "unsupported-format" || k == "schema" || k == "invalid-rotation";
}

// Runs one stage, timing it and tagging any failure with the stage name.
template <typename F>
auto stage(PipelineReport& report, const char* name, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&] {
    const auto dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    report.timings.push_back({name, dt});
  };
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      finish();
    } else {
      auto r = f();
      finish();
      return r;
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what(), is_input_fault(e));
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), false);
  }
}

}  // namespace

CorrespondencePairs landmark_pairs(const TemplateConfig& config, const std::vector<LandmarkPick>& picks) {
  CorrespondencePairs pairs;
  pairs.source.resize(3, Eigen::Index(picks.size()));
  pairs.target.resize(3, Eigen::Index(picks.size()));
  for (std::size_t i = 0; i < picks.size(); ++i) {
    pairs.source.col(Eigen::Index(i)) =
        picks[i].model_point ? *picks[i].model_point : config.landmark(picks[i].feature).point;
    pairs.target.col(Eigen::Index(i)) = picks[i].image_point;
  }
  return pairs;
}

std::pair<RigidTransformd, double> register_landmarks(const TemplateConfig& config,
                                                      const std::vector<LandmarkPick>& picks) {
  if (picks.size() < 3) {
    throw InputError("at least 3 landmarks are required, got " + std::to_string(picks.size()));
  }
  const CorrespondencePairs pairs = landmark_pairs(config, picks);
  const RigidTransformd t = absolute_orientation(pairs);
  return {t, fiducial_registration_error(t, pairs)};
}

std::pair<RigidTransformd, IcpResult> refine_pose(const TemplateConfig& config, const PointCloud& image_points,
                                                  const RigidTransformd& initial_pose, const IcpParams& params,
                                                  const SurfaceSampling& sampling) {
  const NNIndex model(superior_surface_points(config, sampling));
  IcpResult r = icp(image_points, model, invert(initial_pose), params);
  return {invert(r.transform), std::move(r)};
}

IcpSource parse_icp_source(std::string_view s) {
  if (s == "voxels") return IcpSource::Voxels;
  if (s == "surface") return IcpSource::Surface;
  throw InputError("ICP source must be 'voxels' or 'surface', got '" + std::string(s) + "'");
}

std::string_view to_string(IcpSource s) { return s == IcpSource::Voxels ? "voxels" : "surface"; }

PointCloud icp_image_points(const ScalarVolume& vol, double threshold, IcpSource source) {
  if (source == IcpSource::Voxels) return threshold_points(vol, threshold);
  return marching_cubes(vol, threshold).vertices;
}

TriangleMesh tumor_surface(const TumorSource& source) {
  if (source.mesh && source.label) throw InputError("give either a tumour mesh or a tumour label, not both");
  if (source.mesh) {
    if (source.mesh->triangles.cols() == 0) throw InputError("tumour mesh is empty");
    return *source.mesh;
  }
  if (source.label) {
    TriangleMesh m = marching_cubes(*source.label, source.label_iso);
    if (m.triangles.cols() == 0) throw InputError("tumour label produced an empty surface");
    return m;
  }
  throw InputError("no tumour source given");
}

std::vector<NeedleState> needle_states(const TemplateConfig& config, const RigidTransformd& pose, double depth,
                                       const ObbTree& tumor) {
  if (!(depth > 0) || depth > config.max_needle_length) {
    throw InputError("needle depth must be in (0, " + std::to_string(config.max_needle_length) + "] mm");
  }
  const auto hit = select_needles(config, pose, depth, tumor);
  std::vector<NeedleState> out;
  for (const auto& h : hole_grid(config)) {
    const bool sel = std::find(hit.begin(), hit.end(), h.id) != hit.end();
    out.push_back({h.id, sel, depth, config.needle_radius});
  }
  return out;
}

std::string volume_id(const ScalarVolume& vol) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(volume_fingerprint(vol)));
  return buf;
}

PipelineResult run_pipeline(const PipelineInputs& in) {
  PipelineResult out;
  PipelineReport& report = out.report;
  stage(report, kStageLoad, [&] {
    in.config.validate();
    if (in.volume.voxel_count() == 0) throw InputError("volume is empty");
  });
  const auto [initial, fre] = stage(report, kStageLandmarks, [&] { return register_landmarks(in.config, in.landmarks); });
  report.fre = fre;
  const ScalarVolume cropped = stage(report, kStageCrop, [&] {
    return in.roi ? crop_roi(in.volume, *in.roi) : in.volume;
  });
  const PointCloud image_points = stage(report, kStageThreshold, [&] {
    PointCloud pts = icp_image_points(cropped, in.threshold, in.icp_source);
    if (pts.cols() == 0) throw InputError("threshold " + std::to_string(in.threshold) + " selects no points");
    return pts;
  });
  report.image_points = std::size_t(image_points.cols());
  const auto [pose, icp_result] = stage(report, kStageIcp, [&] {
    in.icp.validate();
    return refine_pose(in.config, image_points, initial, in.icp, in.sampling);
  });
  report.iterations = icp_result.iterations;
  report.final_mse = icp_result.mse_trace.empty() ? 0.0 : icp_result.mse_trace.back();
  const ObbTree tumor = stage(report, kStageTumor, [&] { return ObbTree(tumor_surface(in.tumor)); });
  out.plan.needles = stage(report, kStageSelect, [&] { return needle_states(in.config, pose, in.depth, tumor); });
  report.selected = out.plan.selected_count();

  out.plan.pose = pose;
  out.plan.provenance.volume_id = volume_id(in.volume);
  out.plan.provenance.landmarks = landmark_pairs(in.config, in.landmarks);
  out.plan.provenance.icp = {icp_result.iterations, report.final_mse, std::string(to_string(icp_result.termination))};
  out.plan.provenance.config_hash = config_hash(in.config);
  return out;
}

PipelineResult run_pipeline(const PipelineFiles& files) {
  PipelineReport load_report;
  PipelineInputs in;
  stage(load_report, kStageLoad, [&] {
    in.volume = read_nrrd_file(files.volume_path);
    if (files.tumor_mesh_path && files.tumor_label_path) {
      throw InputError("give either --tumor-mesh or --tumor-label, not both");
    }
    if (files.tumor_mesh_path) in.tumor.mesh = read_stl_file(*files.tumor_mesh_path).mesh;
    if (files.tumor_label_path) in.tumor.label = read_nrrd_file(*files.tumor_label_path);
  });
  in.config = files.config;
  in.landmarks = files.landmarks;
  in.threshold = files.threshold;
  in.roi = files.roi;
  in.depth = files.depth;
  in.icp = files.icp;
  in.icp_source = files.icp_source;
  in.sampling = files.sampling;
  PipelineResult r = run_pipeline(in);
  r.report.timings.front().ms += load_report.timings.front().ms;
  return r;
}

namespace {

Vec3d landmark_vec(const nlohmann::json& e, const char* key) {
  const auto& v = e[key];
  if (!v.is_array() || v.size() != 3) throw InputError(std::string("landmark '") + key + "' must have 3 numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

}  // namespace

std::vector<LandmarkPick> landmarks_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() && j.contains("landmarks") ? j["landmarks"] : j;
  if (!arr.is_array()) throw InputError("landmarks must be an array of {source, target} or {feature, point}");
  std::vector<LandmarkPick> out;
  for (const auto& e : arr) {
    if (!e.is_object()) throw InputError("landmark entries must be objects");
    try {
      LandmarkPick p;
      if (e.contains("target")) {
        p.image_point = landmark_vec(e, "target");
      } else if (e.contains("point")) {
        p.image_point = landmark_vec(e, "point");
      } else {
        throw InputError("landmark needs 'target' (or 'point') image coordinates");
      }
      if (e.contains("source")) p.model_point = landmark_vec(e, "source");
      if (e.contains("feature")) p.feature = e["feature"].get<std::string>();
      if (!p.model_point && p.feature.empty()) throw InputError("landmark needs 'source' or 'feature'");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(std::string("landmark: ") + ex.what());
    }
  }
  return out;
}

nlohmann::ordered_json landmarks_to_json(const std::vector<LandmarkPick>& picks) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& p : picks) {
    nlohmann::ordered_json e;
    if (p.model_point) e["source"] = {p.model_point->x(), p.model_point->y(), p.model_point->z()};
    e["target"] = {p.image_point.x(), p.image_point.y(), p.image_point.z()};
    if (!p.feature.empty()) e["feature"] = p.feature;
    arr.push_back(e);
  }
  return arr;
}

nlohmann::ordered_json report_to_json(const PipelineReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json t = nlohmann::ordered_json::array();
  for (const auto& s : r.timings) t.push_back({{"stage", s.stage}, {"ms", s.ms}});
  j["timings"] = t;
  j["total_ms"] = r.total_ms();
  j["fre_mm"] = r.fre;
  j["final_mse_mm2"] = r.final_mse;
  j["iterations"] = r.iterations;
  j["image_points"] = r.image_points;
  j["selected"] = r.selected;
  return j;
}

RoiBox parse_roi(const std::string& text) {
  std::vector<int> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw InputError("");
    } catch (const std::exception&) {
      throw InputError("roi must be six integers i0,j0,k0,i1,j1,k1");
    }
  }
  if (v.size() != 6) throw InputError("roi must be six integers i0,j0,k0,i1,j1,k1");
  return {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

RoiBox roi_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("lower") || !j.contains("upper") || !j["lower"].is_array() ||
      !j["upper"].is_array() || j["lower"].size() != 3 || j["upper"].size() != 3) {
    throw InputError("roi needs 3-element 'lower' and 'upper' index arrays");
  }
  try {
    RoiBox b;
    for (std::size_t a = 0; a < 3; ++a) {
      b.lower[a] = j["lower"][a].get<int>();
      b.upper[a] = j["upper"][a].get<int>();
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("roi: ") + e.what());
  }
}

}  // namespace brachy
