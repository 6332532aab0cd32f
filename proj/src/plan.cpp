#include "brachy/applicator/plan.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

#include <json.hpp>

namespace brachy {

using ordered = nlohmann::ordered_json;

double round_sig9(double v) {
  if (v == 0 || !std::isfinite(v)) return v == 0 ? 0.0 : v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::size_t Plan::selected_count() const {
  std::size_t n = 0;
  for (const auto& s : needles) n += s.selected ? 1 : 0;
  return n;
}

namespace {

ordered vec_json(const Vec3d& v) { return ordered::array({round_sig9(v.x()), round_sig9(v.y()), round_sig9(v.z())}); }

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const char* where) {
  if (!j.is_object()) throw SchemaError(std::string(where) + " must be an object");
  for (const auto& [key, v] : j.items()) {
    if (!allowed.count(key)) throw SchemaError(std::string("unknown field '") + key + "' in " + where);
  }
  for (const auto& key : allowed) {
    if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "' in " + where);
  }
}

double number(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) throw SchemaError(std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw InputError(std::string(what) + " must be finite");
  return v;
}

Vec3d vec_from(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw SchemaError(std::string(what) + " must be a 3-element array");
  return {number(j[0], what), number(j[1], what), number(j[2], what)};
}

}  // namespace

std::string export_plan(const Plan& plan) {
  ordered j;
  j["schema_version"] = plan.schema_version;
  const auto& q = plan.pose.rotation();
  ordered pose;
  pose["rotation"] = ordered::array({round_sig9(q.w()), round_sig9(q.x()), round_sig9(q.y()), round_sig9(q.z())});
  pose["translation"] = vec_json(plan.pose.translation());
  j["pose"] = pose;
  ordered needles = ordered::array();
  for (const auto& n : plan.needles) {
    ordered e;
    e["id"] = n.hole_id;
    e["selected"] = n.selected;
    e["depth"] = round_sig9(n.depth);
    e["radius"] = round_sig9(n.radius);
    needles.push_back(e);
  }
  j["needles"] = needles;
  ordered prov;
  prov["volume_id"] = plan.provenance.volume_id;
  ordered lms = ordered::array();
  for (Eigen::Index i = 0; i < plan.provenance.landmarks.size(); ++i) {
    ordered e;
    e["source"] = vec_json(plan.provenance.landmarks.source.col(i));
    e["target"] = vec_json(plan.provenance.landmarks.target.col(i));
    lms.push_back(e);
  }
  prov["landmarks"] = lms;
  ordered icp;
  icp["iterations"] = plan.provenance.icp.iterations;
  icp["final_mse"] = round_sig9(plan.provenance.icp.final_mse);
  icp["termination"] = plan.provenance.icp.termination;
  prov["icp"] = icp;
  prov["config_hash"] = plan.provenance.config_hash;
  j["provenance"] = prov;
  return j.dump(2) + "\n";
}

Plan import_plan(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("plan is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
    throw SchemaError("plan lacks an integer schema_version");
  }
  const int version = j["schema_version"].get<int>();
  if (version != kPlanSchemaVersion) {
    throw SchemaError("plan schema version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kPlanSchemaVersion) + ")");
  }
  require_keys(j, {"schema_version", "pose", "needles", "provenance"}, "plan");

  Plan plan;
  const auto& pose = j["pose"];
  require_keys(pose, {"rotation", "translation"}, "pose");
  const auto& r = pose["rotation"];
  if (!r.is_array() || r.size() != 4) throw SchemaError("pose.rotation must be [w, x, y, z]");
  const Eigen::Quaterniond q(number(r[0], "rotation"), number(r[1], "rotation"), number(r[2], "rotation"),
                             number(r[3], "rotation"));
  try {
    plan.pose = RigidTransformd(q, vec_from(pose["translation"], "pose.translation"));
  } catch (const InvalidRotation& e) {
    throw InputError(std::string("plan pose: ") + e.what());
  }

  if (!j["needles"].is_array()) throw SchemaError("needles must be an array");
  std::set<std::string> ids;
  for (const auto& e : j["needles"]) {
    require_keys(e, {"id", "selected", "depth", "radius"}, "needle");
    if (!e["id"].is_string() || !e["selected"].is_boolean()) throw SchemaError("needle id/selected have wrong types");
    NeedleState n{e["id"].get<std::string>(), e["selected"].get<bool>(), number(e["depth"], "depth"),
                  number(e["radius"], "radius")};
    if (!ids.insert(n.hole_id).second) throw InputError("duplicate needle id '" + n.hole_id + "'");
    if (n.depth < 0 || n.radius < 0) throw InputError("needle '" + n.hole_id + "' has negative depth or radius");
    plan.needles.push_back(std::move(n));
  }

  const auto& prov = j["provenance"];
  require_keys(prov, {"volume_id", "landmarks", "icp", "config_hash"}, "provenance");
  if (!prov["volume_id"].is_string() || !prov["config_hash"].is_string()) {
    throw SchemaError("provenance ids must be strings");
  }
  plan.provenance.volume_id = prov["volume_id"].get<std::string>();
  plan.provenance.config_hash = prov["config_hash"].get<std::string>();
  if (!prov["landmarks"].is_array()) throw SchemaError("provenance.landmarks must be an array");
  const auto n = Eigen::Index(prov["landmarks"].size());
  plan.provenance.landmarks.source.resize(3, n);
  plan.provenance.landmarks.target.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = prov["landmarks"][std::size_t(i)];
    require_keys(e, {"source", "target"}, "landmark");
    plan.provenance.landmarks.source.col(i) = vec_from(e["source"], "landmark source");
    plan.provenance.landmarks.target.col(i) = vec_from(e["target"], "landmark target");
  }
  const auto& icp = prov["icp"];
  require_keys(icp, {"iterations", "final_mse", "termination"}, "icp");
  if (!icp["iterations"].is_number_integer() || !icp["termination"].is_string()) {
    throw SchemaError("icp summary has wrong types");
  }
  plan.provenance.icp = {icp["iterations"].get<int>(), number(icp["final_mse"], "final_mse"),
                         icp["termination"].get<std::string>()};
  return plan;
}

void validate_plan(const Plan& plan, const TemplateConfig& config) {
  const auto holes = hole_grid(config);
  std::set<std::string> valid;
  for (const auto& h : holes) valid.insert(h.id);
  for (const auto& n : plan.needles) {
    if (!valid.count(n.hole_id)) throw InputError("plan references unknown hole '" + n.hole_id + "'");
    if (n.depth > config.max_needle_length) throw InputError("needle '" + n.hole_id + "' exceeds maximum length");
  }
}

}  // namespace brachy
