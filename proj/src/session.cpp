#include "brachy/service/session.hpp"

#include <cmath>
#include <fstream>

#include "brachy/applicator/needles.hpp"
#include "brachy/geom/stl.hpp"
#include "brachy/volume/nrrd.hpp"
#include "brachy/volume/phantom.hpp"

namespace brachy {

using ordered = nlohmann::ordered_json;

std::vector<LandmarkPick> SessionState::ordered_landmarks() const {
  std::vector<LandmarkPick> out;
  for (const auto& [index, pick] : landmarks) out.push_back(pick);
  return out;
}

namespace {

ordered vec_json(const Vec3d& v) { return ordered::array({v.x(), v.y(), v.z()}); }

Vec3d vec_arg(const nlohmann::json& payload, const char* key) {
  if (!payload.contains(key)) throw InputError(std::string("missing '") + key + "'");
  const auto& v = payload[key];
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
    throw InputError(std::string("'") + key + "' must be a 3-element number array");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

double number_arg(const nlohmann::json& payload, const char* key) {
  if (!payload.contains(key) || !payload[key].is_number()) {
    throw InputError(std::string("'") + key + "' must be a number");
  }
  return payload[key].get<double>();
}

std::string string_arg(const nlohmann::json& payload, const char* key) {
  if (!payload.contains(key) || !payload[key].is_string()) {
    throw InputError(std::string("'") + key + "' must be a string");
  }
  return payload[key].get<std::string>();
}

void require(bool ok, const std::string& stage, const std::string& what) {
  if (!ok) throw StageError(stage, what);
}

bool known_hole(const TemplateConfig& config, const std::string& id) {
  for (const auto& h : hole_grid(config)) {
    if (h.id == id) return true;
  }
  return false;
}

ordered landmark_json(int index, const LandmarkPick& p) {
  ordered j;
  j["index"] = index;
  j["feature"] = p.feature.empty() ? ordered(nullptr) : ordered(p.feature);
  j["source"] = p.model_point ? vec_json(*p.model_point) : ordered(nullptr);
  j["point"] = vec_json(p.image_point);
  return j;
}

ordered pose_json(const std::optional<RigidTransformd>& t) {
  return t ? ordered(transform_to_json(*t)) : ordered(nullptr);
}

// Threshold points over the ROI (whole volume when unset).
std::shared_ptr<const PointCloud> recompute_points(const SessionState& s) {
  const ScalarVolume cropped = s.roi ? crop_roi(*s.volume, *s.roi) : *s.volume;
  return std::make_shared<const PointCloud>(icp_image_points(cropped, *s.threshold, s.icp_source));
}

// Rotation from XYZ angles in degrees, applied x first.
Eigen::Quaterniond euler_xyz_deg(const Vec3d& deg) {
  const Vec3d r = deg * (M_PI / 180.0);
  return Eigen::Quaterniond(Eigen::AngleAxisd(r.z(), Vec3d::UnitZ()) * Eigen::AngleAxisd(r.y(), Vec3d::UnitY()) *
                            Eigen::AngleAxisd(r.x(), Vec3d::UnitX()));
}

std::vector<std::string> clear_selection(SessionState& s) {
  if (s.needles.empty()) return {};
  s.needles.clear();
  s.depth.reset();
  return {"needles"};
}

}  // namespace

CommandOutcome apply_command(SessionState& s, const std::string& type, const nlohmann::json& payload_in) {
  const nlohmann::json payload = payload_in.is_null() ? nlohmann::json::object() : payload_in;
  if (!payload.is_object()) throw InputError("command payload must be a JSON object");
  ordered changed = ordered::object();
  std::vector<std::string> invalidated;
  bool mutated = true;

  if (type == "load-volume") {
    require(s.landmarks.empty(), type, "the volume can only be replaced before any landmark is set");
    const std::string path = string_arg(payload, "path");
    auto vol = std::make_shared<const ScalarVolume>(read_nrrd_file(path));
    s.volume = vol;
    s.volume_path = path;
    s.volume_id = volume_id(*vol);
    if (s.roi || s.threshold || s.image_points) invalidated.insert(invalidated.end(), {"roi", "threshold"});
    s.roi.reset();
    s.threshold.reset();
    s.image_points.reset();
    changed["volume"] = {{"path", path},
                         {"id", s.volume_id},
                         {"dims", {vol->dims()[0], vol->dims()[1], vol->dims()[2]}}};
  } else if (type == "set-landmark") {
    if (!payload.contains("index") || !payload["index"].is_number_integer() || payload["index"].get<int>() < 0) {
      throw InputError("'index' must be a non-negative integer");
    }
    const int index = payload["index"].get<int>();
    LandmarkPick pick;
    if (payload.contains("source")) pick.model_point = vec_arg(payload, "source");
    if (payload.contains("feature") || !pick.model_point) {
      pick.feature = string_arg(payload, "feature");
      s.config.landmark(pick.feature);  // validates the id
    }
    pick.image_point = vec_arg(payload, "point");
    if (!pick.image_point.allFinite() || (pick.model_point && !pick.model_point->allFinite())) {
      throw InputError("landmark coordinates must be finite");
    }
    require(s.volume != nullptr, type, "load a volume before picking landmarks");
    s.landmarks[index] = pick;
    changed["landmark"] = landmark_json(index, pick);
    if (s.initial_pose) {
      s.initial_pose.reset();
      s.fre = 0;
      s.icp.reset();
      s.pose.reset();
      invalidated.insert(invalidated.end(), {"initial_pose", "icp", "pose"});
      for (auto& n : clear_selection(s)) invalidated.push_back(n);
    }
  } else if (type == "register-initial") {
    const auto picks = s.ordered_landmarks();
    if (picks.size() < 3) {
      throw StageError(kStageLandmarks, "register-initial needs 3 landmarks, have " + std::to_string(picks.size()));
    }
    const auto [t, fre] = register_landmarks(s.config, picks);
    s.initial_pose = t;
    s.pose = t;
    s.fre = fre;
    if (s.icp) invalidated.push_back("icp");
    s.icp.reset();
    for (auto& n : clear_selection(s)) invalidated.push_back(n);
    changed["initial_pose"] = transform_to_json(t);
    changed["pose"] = transform_to_json(t);
    changed["fre"] = fre;
  } else if (type == "set-roi") {
    require(s.volume != nullptr, type, "load a volume before setting the ROI");
    const RoiBox box = roi_from_json(payload);
    crop_roi(*s.volume, box);  // validates against the grid
    s.roi = box;
    changed["roi"] = {{"lower", box.lower}, {"upper", box.upper}};
    if (s.threshold) {
      s.image_points = recompute_points(s);
      changed["point_count"] = s.image_points->cols();
    }
  } else if (type == "set-threshold") {
    require(s.volume != nullptr, type, "load a volume before thresholding");
    const double value = number_arg(payload, "value");
    if (payload.contains("source")) s.icp_source = parse_icp_source(string_arg(payload, "source"));
    int limit = 2000;
    if (payload.contains("preview_limit")) {
      if (!payload["preview_limit"].is_number_integer() || payload["preview_limit"].get<int>() < 0) {
        throw InputError("'preview_limit' must be a non-negative integer");
      }
      limit = payload["preview_limit"].get<int>();
    }
    s.threshold = value;
    s.image_points = recompute_points(s);
    const Eigen::Index n = s.image_points->cols();
    ordered preview = ordered::array();
    if (limit > 0 && n > 0) {
      const Eigen::Index stride = std::max<Eigen::Index>(1, (n + limit - 1) / limit);
      for (Eigen::Index i = 0; i < n; i += stride) preview.push_back(vec_json(s.image_points->col(i)));
    }
    changed["threshold"] = value;
    changed["source"] = std::string(to_string(s.icp_source));
    changed["point_count"] = n;
    changed["preview"] = preview;
  } else if (type == "run-icp") {
    require(s.pose.has_value(), kStageIcp, "run register-initial before ICP");
    require(s.image_points != nullptr, kStageIcp, "set a threshold before ICP");
    require(s.image_points->cols() > 0, kStageIcp, "threshold selects no voxels");
    IcpParams params;
    if (payload.contains("epsilon")) params.epsilon = number_arg(payload, "epsilon");
    if (payload.contains("max_iterations")) params.max_iterations = int(number_arg(payload, "max_iterations"));
    if (payload.contains("min_relative_improvement")) {
      params.min_relative_improvement = number_arg(payload, "min_relative_improvement");
    }
    params.validate();
    const auto [pose, result] = refine_pose(s.config, *s.image_points, *s.pose, params, SurfaceSampling{});
    s.pose = pose;
    s.icp = IcpSummary{result.iterations, result.mse_trace.empty() ? 0.0 : result.mse_trace.back(),
                       std::string(to_string(result.termination))};
    for (auto& n : clear_selection(s)) invalidated.push_back(n);
    changed["pose"] = transform_to_json(pose);
    changed["icp"] = {{"iterations", s.icp->iterations},
                      {"final_mse", s.icp->final_mse},
                      {"termination", s.icp->termination},
                      {"mse_trace", result.mse_trace}};
  } else if (type == "nudge-pose") {
    const Vec3d rot = payload.contains("rotation_deg") ? vec_arg(payload, "rotation_deg") : Vec3d::Zero();
    const Vec3d trans = payload.contains("translation") ? vec_arg(payload, "translation") : Vec3d::Zero();
    if (!rot.allFinite() || !trans.allFinite()) throw InputError("nudge must be finite");
    require(s.pose.has_value(), type, "no pose to refine; run register-initial first");
    // Rotation about the template origin, then translation, both in the
    // image frame.
    const Eigen::Quaterniond q = euler_xyz_deg(rot) * s.pose->rotation();
    s.pose = RigidTransformd(q.normalized(), s.pose->translation() + trans);
    for (auto& n : clear_selection(s)) invalidated.push_back(n);
    changed["pose"] = transform_to_json(*s.pose);
  } else if (type == "set-tumor") {
    TumorSource src;
    if (payload.contains("mesh_path")) src.mesh = read_stl_file(string_arg(payload, "mesh_path")).mesh;
    if (payload.contains("mesh")) {
      if (src.mesh) throw InputError("give one tumour source");
      src.mesh = mesh_from_json(payload["mesh"]);
    }
    if (payload.contains("label_path")) {
      if (src.mesh) throw InputError("give one tumour source");
      src.label = read_nrrd_file(string_arg(payload, "label_path"));
      if (payload.contains("iso")) src.label_iso = number_arg(payload, "iso");
    }
    auto mesh = std::make_shared<const TriangleMesh>(tumor_surface(src));
    s.tumor_tree = std::make_shared<const ObbTree>(*mesh);
    s.tumor_mesh = mesh;
    for (auto& n : clear_selection(s)) invalidated.push_back(n);
    changed["tumor"] = {{"vertices", mesh->vertices.cols()}, {"triangles", mesh->triangles.cols()}};
  } else if (type == "select-needles") {
    const double depth = number_arg(payload, "depth");
    require(s.pose.has_value(), kStageSelect, "needle selection needs a pose");
    require(s.tumor_tree != nullptr, kStageSelect, "needle selection needs a tumour");
    s.needles = needle_states(s.config, *s.pose, depth, *s.tumor_tree);
    s.depth = depth;
    ordered ids = ordered::array();
    for (const auto& n : s.needles) {
      if (n.selected) ids.push_back(n.hole_id);
    }
    changed["depth"] = depth;
    changed["selected"] = ids;
  } else if (type == "toggle-needle" || type == "set-depth") {
    const std::string id = string_arg(payload, "id");
    if (!known_hole(s.config, id)) throw InputError("unknown hole id '" + id + "'");
    double depth = 0;
    if (type == "set-depth") {
      depth = number_arg(payload, "depth");
      if (!(depth > 0) || depth > s.config.max_needle_length) {
        throw InputError("depth must be in (0, " + std::to_string(s.config.max_needle_length) + "] mm");
      }
    }
    require(!s.needles.empty(), type, "run select-needles first");
    for (auto& n : s.needles) {
      if (n.hole_id != id) continue;
      if (type == "toggle-needle") {
        n.selected = !n.selected;
        changed["needle"] = {{"id", id}, {"selected", n.selected}};
      } else {
        n.depth = depth;
        changed["needle"] = {{"id", id}, {"depth", depth}};
      }
    }
  } else if (type == "export-plan") {
    const Plan plan = session_plan(s);
    const std::string text = export_plan(plan);
    if (payload.contains("path")) {
      const std::string path = string_arg(payload, "path");
      std::ofstream out(path, std::ios::binary);
      if (!out || !(out << text)) throw InputError("cannot write plan to '" + path + "'");
      changed["path"] = path;
    }
    changed["plan"] = ordered::parse(text);
    mutated = false;
  } else {
    throw InputError("unknown command '" + type + "'");
  }

  if (mutated) ++s.revision;
  ordered delta;
  delta["type"] = type;
  delta["revision"] = s.revision;
  delta["changed"] = changed;
  delta["invalidated"] = invalidated;
  return {delta, mutated};
}

Plan session_plan(const SessionState& s) {
  require(s.pose.has_value(), "export-plan", "no pose yet");
  require(!s.needles.empty(), "export-plan", "no needle selection yet");
  Plan plan;
  plan.pose = *s.pose;
  plan.needles = s.needles;
  plan.provenance.volume_id = s.volume_id;
  plan.provenance.landmarks = landmark_pairs(s.config, s.ordered_landmarks());
  plan.provenance.icp = s.icp.value_or(IcpSummary{0, 0.0, "not-run"});
  plan.provenance.config_hash = config_hash(s.config);
  return plan;
}

ordered mesh_to_json(const TriangleMesh& m) {
  ordered j;
  ordered v = ordered::array();
  for (Eigen::Index i = 0; i < m.vertices.cols(); ++i) v.push_back(vec_json(m.vertices.col(i)));
  ordered t = ordered::array();
  for (Eigen::Index i = 0; i < m.triangles.cols(); ++i) {
    t.push_back({m.triangles(0, i), m.triangles(1, i), m.triangles(2, i)});
  }
  j["vertices"] = v;
  j["triangles"] = t;
  return j;
}

TriangleMesh mesh_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("vertices") || !j.contains("triangles") || !j["vertices"].is_array() ||
      !j["triangles"].is_array()) {
    throw InputError("mesh needs 'vertices' and 'triangles' arrays");
  }
  MeshBuilder b;
  try {
    for (const auto& v : j["vertices"]) {
      if (!v.is_array() || v.size() != 3) throw InputError("mesh vertex must have 3 coordinates");
      b.add_vertex(Vec3d(v[0].get<double>(), v[1].get<double>(), v[2].get<double>()));
    }
    const int nv = int(j["vertices"].size());
    for (const auto& t : j["triangles"]) {
      if (!t.is_array() || t.size() != 3) throw InputError("mesh triangle must have 3 indices");
      const int a = t[0].get<int>(), c = t[1].get<int>(), d = t[2].get<int>();
      if (a < 0 || c < 0 || d < 0 || a >= nv || c >= nv || d >= nv) throw InputError("triangle index out of range");
      b.add_triangle(a, c, d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("mesh: ") + e.what());
  }
  return b.build();
}

ordered session_to_json(const SessionState& s) {
  ordered j;
  j["id"] = s.id;
  j["revision"] = s.revision;
  j["template"] = to_json(s.config);
  j["config_hash"] = config_hash(s.config);
  if (s.volume) {
    const auto& v = *s.volume;
    const auto range = v.value_range();
    ordered dir = ordered::array();
    for (int c = 0; c < 3; ++c) dir.push_back(vec_json(v.directions().col(c)));
    j["volume"] = {{"path", s.volume_path},
                   {"id", s.volume_id},
                   {"dims", {v.dims()[0], v.dims()[1], v.dims()[2]}},
                   {"spacing", vec_json(v.spacing())},
                   {"origin", vec_json(v.origin())},
                   {"directions", dir},
                   {"type", std::string(to_string(v.type()))},
                   {"range", {range.first, range.second}}};
  } else {
    j["volume"] = nullptr;
  }
  ordered lm = ordered::array();
  for (const auto& [index, pick] : s.landmarks) lm.push_back(landmark_json(index, pick));
  j["landmarks"] = lm;
  j["initial_pose"] = pose_json(s.initial_pose);
  j["fre"] = s.initial_pose ? ordered(s.fre) : ordered(nullptr);
  j["roi"] = s.roi ? ordered{{"lower", s.roi->lower}, {"upper", s.roi->upper}} : ordered(nullptr);
  j["threshold"] = s.threshold ? ordered(*s.threshold) : ordered(nullptr);
  j["icp_source"] = std::string(to_string(s.icp_source));
  j["point_count"] = s.image_points ? ordered(s.image_points->cols()) : ordered(nullptr);
  j["icp"] = s.icp ? ordered{{"iterations", s.icp->iterations},
                             {"final_mse", s.icp->final_mse},
                             {"termination", s.icp->termination}}
                   : ordered(nullptr);
  j["pose"] = pose_json(s.pose);
  j["tumor"] = s.tumor_mesh ? ordered{{"vertices", s.tumor_mesh->vertices.cols()},
                                      {"triangles", s.tumor_mesh->triangles.cols()}}
                            : ordered(nullptr);
  j["depth"] = s.depth ? ordered(*s.depth) : ordered(nullptr);
  ordered needles = ordered::array();
  for (const auto& n : s.needles) {
    needles.push_back({{"id", n.hole_id}, {"selected", n.selected}, {"depth", n.depth}, {"radius", n.radius}});
  }
  j["needles"] = needles;
  return j;
}

SessionStore::SessionStore(TemplateConfig default_config) : default_config_(std::move(default_config)) {
  default_config_.validate();
}

std::string SessionStore::create(const std::optional<TemplateConfig>& config) {
  auto state = std::make_shared<SessionState>();
  state->config = config.value_or(default_config_);
  state->config.validate();
  auto s = std::make_shared<Slot>();
  std::lock_guard lock(map_mutex_);
  state->id = "s" + std::to_string(next_id_++);
  s->state = state;
  sessions_[state->id] = s;
  return state->id;
}

std::shared_ptr<SessionStore::Slot> SessionStore::slot(const std::string& id) const {
  std::lock_guard lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

bool SessionStore::exists(const std::string& id) const {
  std::lock_guard lock(map_mutex_);
  return sessions_.count(id) != 0;
}

std::shared_ptr<const SessionState> SessionStore::snapshot(const std::string& id) const {
  const auto s = slot(id);
  std::shared_lock lock(s->guard);
  return s->state;
}

std::string SessionStore::status(const std::string& id) const {
  const auto s = slot(id);
  std::shared_lock lock(s->guard);
  return s->running;
}

CommandOutcome SessionStore::command(const std::string& id, std::uint64_t revision, const std::string& type,
                                     const nlohmann::json& payload) {
  const auto s = slot(id);
  std::lock_guard writer(s->writer);
  std::shared_ptr<const SessionState> current;
  {
    std::unique_lock lock(s->guard);
    current = s->state;
    if (current->revision != revision) {
      throw ConflictError("stale revision " + std::to_string(revision) + ", session is at " +
                              std::to_string(current->revision),
                          long(current->revision));
    }
    s->running = type;
  }
  auto next = std::make_shared<SessionState>(*current);
  try {
    CommandOutcome out = apply_command(*next, type, payload);
    std::unique_lock lock(s->guard);
    if (out.mutated) s->state = std::move(next);
    s->running.clear();
    return out;
  } catch (...) {
    std::unique_lock lock(s->guard);
    s->running.clear();
    throw;
  }
}

}  // namespace brachy
