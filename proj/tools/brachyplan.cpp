#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "brachy/applicator/needles.hpp"
#include "brachy/geom/stl.hpp"
#include "brachy/service/http_server.hpp"
#include "brachy/service/pipeline.hpp"
#include "brachy/volume/marching_cubes.hpp"
#include "brachy/volume/nrrd.hpp"
#include "brachy/volume/phantom.hpp"

using namespace brachy;
namespace fs = std::filesystem;
using ordered = nlohmann::ordered_json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitStage = 3;

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), std::size_t(e.byte));
  }
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f || !(f << text)) throw InputError("cannot write '" + out + "'");
}

TemplateConfig config_from(const std::string& path) { return path.empty() ? TemplateConfig{} : load_template_config(path); }

RigidTransformd pose_from(const std::string& path) {
  const nlohmann::json j = read_json(path);
  return transform_from_json(j.contains("pose") ? j["pose"] : j);
}

bool input_fault(const Error& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->input_fault();
  const std::string k = e.kind();
  return k == "input" || k == "parse" || k == "unsupported-format" || k == "schema" || k == "invalid-rotation";
}

struct Options {
  std::string icp_source = "voxels";
  std::string volume, config, landmarks, roi, tumor_mesh, tumor_label, out, spec, pose, init, report, bind = "127.0.0.1:8080",
      static_dir;
  double threshold = 0, depth = 0, noise = -1;
  std::uint64_t seed = 0;
  bool seed_set = false, ascii = false;
  double epsilon = IcpParams{}.epsilon;
  int max_iterations = IcpParams{}.max_iterations;
};

IcpParams icp_params(const Options& o) {
  IcpParams p;
  p.epsilon = o.epsilon;
  p.max_iterations = o.max_iterations;
  return p;
}

int cmd_phantom(const Options& o) {
  PhantomSpec spec = o.spec.empty() ? default_phantom_spec() : phantom_spec_from_json(read_json(o.spec));
  if (!o.config.empty()) spec.config = load_template_config(o.config);
  if (o.seed_set) spec.seed = o.seed;
  if (o.noise >= 0) spec.noise_sigma = o.noise;
  const PhantomScene scene = generate_phantom(spec);
  const fs::path dir = o.out.empty() ? fs::path("phantom") : fs::path(o.out);
  fs::create_directories(dir);
  write_nrrd_file(dir / "volume.nrrd", scene.volume);
  write_nrrd_file(dir / "tumor_label.nrrd", tumor_label_volume(scene));
  write_stl_file(dir / "tumor.stl", scene.tumor_mesh);
  emit((dir / "template.json").string(), to_json(spec.config).dump(2) + "\n");
  emit((dir / "spec.json").string(), to_json(spec).dump(2) + "\n");
  std::vector<LandmarkPick> picks;
  const auto features = spec.config.effective_landmarks();
  for (std::size_t i = 0; i < features.size(); ++i) {
    picks.push_back({features[i].id, scene.landmark_truth.target.col(Eigen::Index(i)), features[i].point});
  }
  emit((dir / "landmarks.json").string(), landmarks_to_json(picks).dump(2) + "\n");
  ordered truth;
  truth["pose"] = transform_to_json(scene.true_pose);
  truth["tumor_center"] = {scene.tumor_center.x(), scene.tumor_center.y(), scene.tumor_center.z()};
  truth["tumor_radius"] = scene.tumor_radius;
  truth["threshold"] = spec.hole_threshold();
  if (o.depth > 0) {
    truth["depth"] = o.depth;
    truth["hit_set"] = analytic_hit_set(spec.config, scene.true_pose, o.depth, scene.tumor_center, scene.tumor_radius);
  }
  emit((dir / "truth.json").string(), truth.dump(2) + "\n");
  std::cerr << "wrote phantom to " << dir.string() << "\n";
  return 0;
}

int cmd_register(const Options& o) {
  const TemplateConfig config = config_from(o.config);
  const auto [pose, fre] = register_landmarks(config, landmarks_from_json(read_json(o.landmarks)));
  ordered j;
  j["pose"] = transform_to_json(pose);
  j["fre"] = fre;
  emit(o.out, j.dump(2) + "\n");
  return 0;
}

int cmd_icp(const Options& o) {
  const TemplateConfig config = config_from(o.config);
  RigidTransformd init;
  if (!o.init.empty()) {
    init = pose_from(o.init);
  } else if (!o.landmarks.empty()) {
    init = register_landmarks(config, landmarks_from_json(read_json(o.landmarks))).first;
  } else {
    throw InputError("icp needs --init or --landmarks for the starting pose");
  }
  ScalarVolume vol = read_nrrd_file(o.volume);
  if (!o.roi.empty()) vol = crop_roi(vol, parse_roi(o.roi));
  const PointCloud pts = icp_image_points(vol, o.threshold, parse_icp_source(o.icp_source));
  if (pts.cols() == 0) throw StageError(kStageThreshold, "threshold selects no points", true);
  const auto [pose, result] = refine_pose(config, pts, init, icp_params(o), SurfaceSampling{});
  ordered j;
  j["pose"] = transform_to_json(pose);
  j["icp"] = {{"iterations", result.iterations},
              {"termination", std::string(to_string(result.termination))},
              {"mse_trace", result.mse_trace}};
  emit(o.out, j.dump(2) + "\n");
  return 0;
}

int cmd_extract(const Options& o) {
  const ScalarVolume vol = read_nrrd_file(o.volume);
  const TriangleMesh mesh = marching_cubes(vol, o.threshold);
  if (o.out.empty()) throw InputError("extract-surface needs --out");
  if (o.ascii) {
    emit(o.out, write_stl_ascii(mesh, "surface"));
  } else {
    write_stl_file(o.out, mesh);
  }
  std::cerr << mesh.vertices.cols() << " vertices, " << mesh.triangles.cols() << " triangles\n";
  return 0;
}

TumorSource tumor_from(const Options& o) {
  TumorSource src;
  if (!o.tumor_mesh.empty() && !o.tumor_label.empty()) throw InputError("give --tumor-mesh or --tumor-label, not both");
  if (!o.tumor_mesh.empty()) src.mesh = read_stl_file(o.tumor_mesh).mesh;
  if (!o.tumor_label.empty()) src.label = read_nrrd_file(o.tumor_label);
  return src;
}

int cmd_select(const Options& o) {
  const TemplateConfig config = config_from(o.config);
  const RigidTransformd pose = pose_from(o.pose);
  const ObbTree tumor(tumor_surface(tumor_from(o)));
  const auto states = needle_states(config, pose, o.depth, tumor);
  ordered ids = ordered::array();
  for (const auto& s : states) {
    if (s.selected) ids.push_back(s.hole_id);
  }
  emit(o.out, ordered{{"depth", o.depth}, {"selected", ids}}.dump(2) + "\n");
  return 0;
}

int cmd_pipeline(const Options& o) {
  PipelineFiles f;
  f.volume_path = o.volume;
  f.config = config_from(o.config);
  f.landmarks = landmarks_from_json(read_json(o.landmarks));
  f.threshold = o.threshold;
  if (!o.roi.empty()) f.roi = parse_roi(o.roi);
  if (!o.tumor_mesh.empty()) f.tumor_mesh_path = o.tumor_mesh;
  if (!o.tumor_label.empty()) f.tumor_label_path = o.tumor_label;
  f.depth = o.depth;
  f.icp = icp_params(o);
  f.icp_source = parse_icp_source(o.icp_source);
  const PipelineResult r = run_pipeline(f);
  emit(o.out, export_plan(r.plan));
  const std::string report = report_to_json(r.report).dump(2) + "\n";
  if (o.report.empty()) {
    std::cerr << report;
  } else {
    emit(o.report, report);
  }
  return 0;
}

int cmd_serve(const Options& o) {
  ServerOptions so;
  const auto colon = o.bind.rfind(':');
  if (colon == std::string::npos) throw InputError("--bind must be host:port");
  so.host = o.bind.substr(0, colon);
  try {
    so.port = std::stoi(o.bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw InputError("--bind port must be a number");
  }
  if (!o.static_dir.empty()) so.static_dir = o.static_dir;
  SessionStore store(config_from(o.config));
  serve(store, so);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MR-guided gynecologic brachytherapy template planning"};
  app.set_version_flag("--version", BRACHY_VERSION);
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* c) { c->add_option("--config", o.config, "template config JSON"); };
  auto add_icp = [&](CLI::App* c) {
    c->add_option("--epsilon", o.epsilon, "ICP MSE threshold (mm^2)");
    c->add_option("--max-iterations", o.max_iterations, "ICP iteration cap");
    c->add_option("--icp-source", o.icp_source, "voxels | surface");
  };
  auto add_tumor = [&](CLI::App* c) {
    auto* m = c->add_option("--tumor-mesh", o.tumor_mesh, "tumour surface STL (image frame)");
    auto* l = c->add_option("--tumor-label", o.tumor_label, "tumour label NRRD");
    m->excludes(l);
  };

  auto* phantom = app.add_subcommand("phantom", "write a synthetic scan with known pose and tumour");
  add_common(phantom);
  phantom->add_option("--spec", o.spec, "phantom spec JSON");
  phantom->add_option("--seed", o.seed, "noise seed")->each([&](const std::string&) { o.seed_set = true; });
  phantom->add_option("--noise", o.noise, "noise sigma");
  phantom->add_option("--depth", o.depth, "needle depth for the reference hit set");
  phantom->add_option("--out", o.out, "output directory");

  auto* reg = app.add_subcommand("register", "landmarks -> initial transform");
  add_common(reg);
  reg->add_option("--landmarks", o.landmarks, "landmark picks JSON")->required();
  reg->add_option("--out", o.out, "output JSON (default stdout)");

  auto* icp_cmd = app.add_subcommand("icp", "refine a pose against thresholded voxels");
  add_common(icp_cmd);
  add_icp(icp_cmd);
  icp_cmd->add_option("--volume", o.volume, "NRRD volume")->required();
  icp_cmd->add_option("--landmarks", o.landmarks, "landmark picks JSON for the start pose");
  icp_cmd->add_option("--init", o.init, "start pose JSON");
  icp_cmd->add_option("--threshold", o.threshold, "hole threshold")->required();
  icp_cmd->add_option("--roi", o.roi, "i0,j0,k0,i1,j1,k1");
  icp_cmd->add_option("--out", o.out, "output JSON (default stdout)");

  auto* extract = app.add_subcommand("extract-surface", "marching cubes isosurface to STL");
  extract->add_option("--volume", o.volume, "NRRD volume")->required();
  extract->add_option("--threshold", o.threshold, "isovalue")->required();
  extract->add_option("--out", o.out, "output STL")->required();
  extract->add_flag("--ascii", o.ascii, "write ASCII STL");

  auto* select = app.add_subcommand("select", "needles whose trajectories hit the tumour");
  add_common(select);
  add_tumor(select);
  select->add_option("--pose", o.pose, "template pose JSON")->required();
  select->add_option("--depth", o.depth, "needle depth (mm)")->required();
  select->add_option("--out", o.out, "output JSON (default stdout)");

  auto* pipe = app.add_subcommand("pipeline", "end-to-end plan");
  add_common(pipe);
  add_icp(pipe);
  add_tumor(pipe);
  pipe->add_option("--volume", o.volume, "NRRD volume")->required();
  pipe->add_option("--landmarks", o.landmarks, "landmark picks JSON")->required();
  pipe->add_option("--threshold", o.threshold, "hole threshold")->required();
  pipe->add_option("--roi", o.roi, "i0,j0,k0,i1,j1,k1");
  pipe->add_option("--depth", o.depth, "needle depth (mm)")->required();
  pipe->add_option("--out", o.out, "plan JSON (default stdout)");
  pipe->add_option("--report", o.report, "report JSON (default stderr)");

  auto* srv = app.add_subcommand("serve", "HTTP JSON API");
  add_common(srv);
  srv->add_option("--bind", o.bind, "host:port");
  srv->add_option("--static", o.static_dir, "UI asset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*phantom) return cmd_phantom(o);
    if (*reg) return cmd_register(o);
    if (*icp_cmd) return cmd_icp(o);
    if (*extract) return cmd_extract(o);
    if (*select) return cmd_select(o);
    if (*pipe) return cmd_pipeline(o);
    if (*srv) return cmd_serve(o);
  } catch (const Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
    return input_fault(e) ? kExitInput : kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}
