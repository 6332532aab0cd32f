#include "brachy/applicator/template_config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "brachy/registration/absolute_orientation.hpp"

namespace brachy {

std::string hole_label(int row, int col) {
  return std::string(1, char('A' + row)) + std::to_string(col + 1);
}

void TemplateConfig::validate() const {
  if (rows < 1 || cols < 1) throw InputError("template grid needs at least one row and column");
  if (rows > 26) throw InputError("template grid supports at most 26 lettered rows");
  if (!(hole_radius > 0)) throw InputError("hole radius must be positive");
  if (!(pitch > 2 * hole_radius)) throw InputError("hole pitch must exceed twice the hole radius");
  if (!(plate_thickness > 0)) throw InputError("plate thickness must be positive");
  const double span_x = (cols - 1) * pitch / 2 + hole_radius;
  const double span_y = (rows - 1) * pitch / 2 + hole_radius;
  if (!(plate_width / 2 > span_x && plate_height / 2 > span_y)) {
    throw InputError("template plate is too small for its hole grid");
  }
  if (obturator_hole_radius < 0) throw InputError("obturator hole radius must be >= 0");
  if (obturator_hole_radius > 0 &&
      !(obturator_hole_radius < plate_width / 2 && obturator_hole_radius < plate_height / 2)) {
    throw InputError("obturator hole does not fit in the plate");
  }
  if (!(obturator_radius > 0) || !(obturator_length > 0)) throw InputError("obturator radius and length must be positive");
  if (obturator_hole_radius > 0 && obturator_radius > obturator_hole_radius) {
    throw InputError("obturator is wider than its hole");
  }
  if (bore_sides < 3 || needle_sides < 3) throw InputError("polygon side counts must be >= 3");
  if (!(needle_radius >= 0)) throw InputError("needle radius must be >= 0");
  if (!(max_needle_length > 0)) throw InputError("max needle length must be positive");

  const auto lms = effective_landmarks();
  if (lms.size() < 3) throw InputError("template needs at least 3 landmark features");
  std::set<std::string> ids;
  PointCloud pts(3, Eigen::Index(lms.size()));
  for (std::size_t i = 0; i < lms.size(); ++i) {
    if (!ids.insert(lms[i].id).second) throw InputError("duplicate landmark id '" + lms[i].id + "'");
    pts.col(Eigen::Index(i)) = lms[i].point;
  }
  try {
    require_noncollinear(pts, "landmark feature");
  } catch (const DegenerateConfiguration& e) {
    throw InputError(e.what());
  }
}

std::vector<LandmarkFeature> TemplateConfig::effective_landmarks() const {
  if (!landmarks.empty()) return landmarks;
  const double x0 = -(cols - 1) * pitch / 2, y0 = (rows - 1) * pitch / 2;
  const double x1 = -x0, y1 = -y0;
  return {{hole_label(0, 0), Vec3d(x0, y0, 0)},
          {hole_label(0, cols - 1), Vec3d(x1, y0, 0)},
          {hole_label(rows - 1, 0), Vec3d(x0, y1, 0)}};
}

LandmarkFeature TemplateConfig::landmark(const std::string& id) const {
  for (const auto& l : effective_landmarks()) {
    if (l.id == id) return l;
  }
  throw InputError("unknown landmark feature '" + id + "'");
}

namespace {

nlohmann::json vec_json(const Vec3d& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3d vec_from(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InputError(std::string(what) + " must be a 3-element array");
  Vec3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[std::size_t(i)].is_number()) throw InputError(std::string(what) + " must hold numbers");
    v[i] = j[std::size_t(i)].get<double>();
  }
  if (!v.allFinite()) throw InputError(std::string(what) + " must be finite");
  return v;
}

}  // namespace

nlohmann::ordered_json to_json(const TemplateConfig& c) {
  nlohmann::ordered_json j;
  j["rows"] = c.rows;
  j["cols"] = c.cols;
  j["pitch"] = c.pitch;
  j["hole_radius"] = c.hole_radius;
  j["plate_width"] = c.plate_width;
  j["plate_height"] = c.plate_height;
  j["plate_thickness"] = c.plate_thickness;
  j["obturator_hole_radius"] = c.obturator_hole_radius;
  j["obturator_radius"] = c.obturator_radius;
  j["obturator_length"] = c.obturator_length;
  j["bore_sides"] = c.bore_sides;
  j["needle_radius"] = c.needle_radius;
  j["needle_sides"] = c.needle_sides;
  j["max_needle_length"] = c.max_needle_length;
  auto lms = nlohmann::ordered_json::array();
  for (const auto& l : c.effective_landmarks()) {
    nlohmann::ordered_json e;
    e["id"] = l.id;
    e["point"] = vec_json(l.point);
    lms.push_back(e);
  }
  j["landmarks"] = lms;
  if (c.template_stl) j["template_stl"] = *c.template_stl;
  if (c.obturator_stl) j["obturator_stl"] = *c.obturator_stl;
  return j;
}

TemplateConfig template_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("template config must be a JSON object");
  TemplateConfig c;
  static const std::set<std::string> known = {
      "rows", "cols", "pitch", "hole_radius", "plate_width", "plate_height", "plate_thickness",
      "obturator_hole_radius", "obturator_radius", "obturator_length", "bore_sides", "needle_radius",
      "needle_sides", "max_needle_length", "landmarks", "template_stl", "obturator_stl"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw InputError("unknown template config field '" + key + "'");
  }
  auto num = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw InputError(std::string("template config field '") + key + "' must be a number");
    field = j[key].get<std::decay_t<decltype(field)>>();
  };
  num("rows", c.rows);
  num("cols", c.cols);
  num("pitch", c.pitch);
  num("hole_radius", c.hole_radius);
  num("plate_width", c.plate_width);
  num("plate_height", c.plate_height);
  num("plate_thickness", c.plate_thickness);
  num("obturator_hole_radius", c.obturator_hole_radius);
  num("obturator_radius", c.obturator_radius);
  num("obturator_length", c.obturator_length);
  num("bore_sides", c.bore_sides);
  num("needle_radius", c.needle_radius);
  num("needle_sides", c.needle_sides);
  num("max_needle_length", c.max_needle_length);
  if (j.contains("landmarks")) {
    for (const auto& e : j["landmarks"]) {
      if (!e.is_object() || !e.contains("id") || !e.contains("point")) {
        throw InputError("landmark entries need 'id' and 'point'");
      }
      c.landmarks.push_back({e["id"].get<std::string>(), vec_from(e["point"], "landmark point")});
    }
  }
  if (j.contains("template_stl")) c.template_stl = j["template_stl"].get<std::string>();
  if (j.contains("obturator_stl")) c.obturator_stl = j["obturator_stl"].get<std::string>();
  c.validate();
  return c;
}

TemplateConfig load_template_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open template config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("template config " + path + ": " + e.what());
  }
  return template_config_from_json(j);
}

std::string config_hash(const TemplateConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Hole> hole_grid(const TemplateConfig& config) {
  std::vector<Hole> holes;
  const double exclusion = config.obturator_hole_radius > 0 ? config.obturator_hole_radius + config.hole_radius : 0.0;
  for (int r = 0; r < config.rows; ++r) {
    for (int c = 0; c < config.cols; ++c) {
      const double x = (c - (config.cols - 1) / 2.0) * config.pitch;
      const double y = ((config.rows - 1) / 2.0 - r) * config.pitch;
      if (exclusion > 0 && std::hypot(x, y) <= exclusion) continue;
      holes.push_back({hole_label(r, c), Vec3d(x, y, 0), Vec3d(0, 0, -1)});
    }
  }
  return holes;
}

const Hole& find_hole(const std::vector<Hole>& holes, const std::string& id) {
  for (const auto& h : holes) {
    if (h.id == id) return h;
  }
  throw InputError("unknown hole id '" + id + "'");
}

}  // namespace brachy
