#include "brachy/volume/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "brachy/applicator/template_config.hpp"

namespace brachy {

PhantomSpec default_phantom_spec() {
  PhantomSpec s;
  s.pose = RigidTransformd::axis_angle(Vec3d(1.0, 2.0, 0.5), 6.0 * M_PI / 180.0, Vec3d(2.3, -4.1, 61.7));
  return s;
}

namespace {

// Index-space bounding box (clamped) of a world-space sphere.
void index_bounds(const ScalarVolume& vol, const Vec3d& c, double r, Index3& lo, Index3& hi) {
  Vec3d ilo = Vec3d::Constant(std::numeric_limits<double>::infinity()), ihi = -ilo;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3d p = c + r * Vec3d((corner & 1) ? 1 : -1, (corner & 2) ? 1 : -1, (corner & 4) ? 1 : -1);
    const Vec3d idx = vol.world_to_index(p);
    ilo = ilo.cwiseMin(idx);
    ihi = ihi.cwiseMax(idx);
  }
  for (int a = 0; a < 3; ++a) {
    lo[std::size_t(a)] = std::max(0, int(std::floor(ilo[a])));
    hi[std::size_t(a)] = std::min(vol.dims()[std::size_t(a)] - 1, int(std::ceil(ihi[a])));
  }
}

bool inside_grid(const ScalarVolume& vol, const Vec3d& world) {
  const Vec3d idx = vol.world_to_index(world);
  for (int a = 0; a < 3; ++a) {
    if (idx[a] < 0 || idx[a] > vol.dims()[std::size_t(a)] - 1) return false;
  }
  return true;
}

template <typename F>
void for_each_in_ball(const ScalarVolume& vol, const Vec3d& c, double r, F&& f) {
  Index3 lo, hi;
  index_bounds(vol, c, r, lo, hi);
  for (int k = lo[2]; k <= hi[2]; ++k) {
    for (int j = lo[1]; j <= hi[1]; ++j) {
      for (int i = lo[0]; i <= hi[0]; ++i) f(i, j, k);
    }
  }
}

}  // namespace

PhantomScene generate_phantom(const PhantomSpec& spec) {
  spec.config.validate();
  if (!(spec.tumor_radius > 0)) throw InputError("tumour radius must be positive");
  if (!(spec.noise_sigma >= 0)) throw InputError("noise sigma must be >= 0");
  ScalarVolume vol = ScalarVolume::zeros(spec.dims, spec.spacing, spec.origin, spec.type);
  std::fill(vol.mutable_values().begin(), vol.mutable_values().end(), float(clamp_to_type(spec.background, spec.type)));

  const auto holes = hole_grid(spec.config);
  const double depth = spec.config.plate_thickness;
  const double r = spec.config.hole_radius;
  for (const auto& h : holes) {
    for (const Vec3d& p : {h.entry, Vec3d(h.entry + depth * h.direction)}) {
      for (int s = 0; s < 4; ++s) {
        const Vec3d rim = p + r * Vec3d(s == 0 ? 1 : s == 1 ? -1 : 0, s == 2 ? 1 : s == 3 ? -1 : 0, 0);
        if (!inside_grid(vol, spec.pose(rim))) {
          throw InputError("template hole " + h.id + " falls outside the phantom volume");
        }
      }
    }
  }
  for (int a = 0; a < 3; ++a) {
    Vec3d off = Vec3d::Zero();
    off[a] = spec.tumor_radius;
    if (!inside_grid(vol, spec.tumor_center + off) || !inside_grid(vol, spec.tumor_center - off)) {
      throw InputError("tumour falls outside the phantom volume");
    }
  }

  const float tumor_value = float(clamp_to_type(spec.tumor_intensity, spec.type));
  for_each_in_ball(vol, spec.tumor_center, spec.tumor_radius, [&](int i, int j, int k) {
    if ((vol.index_to_world(i, j, k) - spec.tumor_center).norm() <= spec.tumor_radius) vol.at(i, j, k) = tumor_value;
  });

  const RigidTransformd to_model = invert(spec.pose);
  const float hole_value = float(clamp_to_type(spec.hole_intensity, spec.type));
  for (const auto& h : holes) {
    const Vec3d mid = spec.pose(h.entry + 0.5 * depth * h.direction);
    const double reach = std::hypot(0.5 * depth, r) + 1e-9;
    for_each_in_ball(vol, mid, reach, [&](int i, int j, int k) {
      const Vec3d m = to_model(vol.index_to_world(i, j, k)) - h.entry;
      const double t = m.dot(h.direction);
      if (t < -1e-9 || t > depth + 1e-9) return;
      if ((m - t * h.direction).norm() <= r + 1e-9) vol.at(i, j, k) = hole_value;
    });
  }

  if (spec.noise_sigma > 0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (float& v : vol.mutable_values()) v = float(clamp_to_type(double(v) + noise(rng), spec.type));
  }

  PhantomScene scene;
  scene.volume = std::move(vol);
  scene.true_pose = spec.pose;
  scene.tumor_center = spec.tumor_center;
  scene.tumor_radius = spec.tumor_radius;
  scene.tumor_mesh = icosphere(spec.tumor_center, spec.tumor_radius, spec.tumor_subdivisions);
  const auto features = spec.config.effective_landmarks();
  scene.landmark_truth.source.resize(3, 3);
  for (int i = 0; i < 3; ++i) scene.landmark_truth.source.col(i) = features[std::size_t(i)].point;
  scene.landmark_truth.target = transform_points(spec.pose, scene.landmark_truth.source);
  return scene;
}

ScalarVolume tumor_label_volume(const PhantomScene& scene) {
  const ScalarVolume& v = scene.volume;
  ScalarVolume label(v.dims(), v.spacing(), v.origin(), v.directions(), VoxelType::UInt8,
                     std::vector<float>(v.voxel_count(), 0.0f));
  for_each_in_ball(label, scene.tumor_center, scene.tumor_radius, [&](int i, int j, int k) {
    if ((label.index_to_world(i, j, k) - scene.tumor_center).norm() <= scene.tumor_radius) label.at(i, j, k) = 1.0f;
  });
  return label;
}

std::vector<std::string> analytic_hit_set(const TemplateConfig& config, const RigidTransformd& pose, double depth,
                                          const Vec3d& center, double radius) {
  std::vector<std::string> out;
  for (const auto& h : hole_grid(config)) {
    const Vec3d a = pose(h.entry);
    const Vec3d b = pose(Vec3d(h.entry + depth * h.direction));
    const Vec3d ab = b - a;
    const double t = std::clamp((center - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    if ((a + t * ab - center).norm() <= radius + config.needle_radius) out.push_back(h.id);
  }
  return out;
}

nlohmann::ordered_json transform_to_json(const RigidTransformd& t) {
  nlohmann::ordered_json j;
  const auto& q = t.rotation();
  j["rotation"] = {q.w(), q.x(), q.y(), q.z()};
  j["translation"] = {t.translation().x(), t.translation().y(), t.translation().z()};
  return j;
}

RigidTransformd transform_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rotation") || !j.contains("translation")) {
    throw InputError("transform needs 'rotation' [w,x,y,z] and 'translation' [x,y,z]");
  }
  const auto& r = j["rotation"];
  const auto& t = j["translation"];
  if (!r.is_array() || r.size() != 4 || !t.is_array() || t.size() != 3) {
    throw InputError("transform rotation must have 4 and translation 3 components");
  }
  try {
    return RigidTransformd::from_normalized(
        Eigen::Quaterniond(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()),
        Vec3d(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("transform: ") + e.what());
  }
}

namespace {

Index3 index3_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw InputError("dims must be a 3-element array");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

Vec3d vec3_from(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InputError(std::string(what) + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

VoxelType voxel_type_from(const std::string& s) {
  if (s == "uint8") return VoxelType::UInt8;
  if (s == "int16") return VoxelType::Int16;
  if (s == "uint16") return VoxelType::UInt16;
  if (s == "float" || s == "float32") return VoxelType::Float32;
  throw InputError("unknown voxel type '" + s + "'");
}

}  // namespace

nlohmann::ordered_json to_json(const PhantomSpec& s) {
  nlohmann::ordered_json j;
  j["template"] = to_json(s.config);
  j["pose"] = transform_to_json(s.pose);
  j["dims"] = {s.dims[0], s.dims[1], s.dims[2]};
  j["spacing"] = {s.spacing.x(), s.spacing.y(), s.spacing.z()};
  j["origin"] = {s.origin.x(), s.origin.y(), s.origin.z()};
  j["voxel_type"] = std::string(to_string(s.type));
  j["background"] = s.background;
  j["hole_intensity"] = s.hole_intensity;
  j["tumor_intensity"] = s.tumor_intensity;
  j["tumor_center"] = {s.tumor_center.x(), s.tumor_center.y(), s.tumor_center.z()};
  j["tumor_radius"] = s.tumor_radius;
  j["tumor_subdivisions"] = s.tumor_subdivisions;
  j["noise_sigma"] = s.noise_sigma;
  j["seed"] = s.seed;
  return j;
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("phantom spec must be a JSON object");
  static const std::set<std::string> known = {"template", "template_path", "pose", "dims", "spacing", "origin",
                                              "voxel_type", "background", "hole_intensity", "tumor_intensity",
                                              "tumor_center", "tumor_radius", "tumor_subdivisions", "noise_sigma",
                                              "seed"};
  for (const auto& [key, v] : j.items()) {
    if (!known.count(key)) throw InputError("unknown phantom spec field '" + key + "'");
  }
  PhantomSpec s = default_phantom_spec();
  try {
    if (j.contains("template")) s.config = template_config_from_json(j["template"]);
    if (j.contains("template_path")) s.config = load_template_config(j["template_path"].get<std::string>());
    if (j.contains("pose")) s.pose = transform_from_json(j["pose"]);
    if (j.contains("dims")) s.dims = index3_from(j["dims"]);
    if (j.contains("spacing")) s.spacing = vec3_from(j["spacing"], "spacing");
    if (j.contains("origin")) s.origin = vec3_from(j["origin"], "origin");
    if (j.contains("voxel_type")) s.type = voxel_type_from(j["voxel_type"].get<std::string>());
    if (j.contains("background")) s.background = j["background"].get<double>();
    if (j.contains("hole_intensity")) s.hole_intensity = j["hole_intensity"].get<double>();
    if (j.contains("tumor_intensity")) s.tumor_intensity = j["tumor_intensity"].get<double>();
    if (j.contains("tumor_center")) s.tumor_center = vec3_from(j["tumor_center"], "tumor_center");
    if (j.contains("tumor_radius")) s.tumor_radius = j["tumor_radius"].get<double>();
    if (j.contains("tumor_subdivisions")) s.tumor_subdivisions = j["tumor_subdivisions"].get<int>();
    if (j.contains("noise_sigma")) s.noise_sigma = j["noise_sigma"].get<double>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("phantom spec: ") + e.what());
  }
  return s;
}

}  // namespace brachy
