#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "brachy/geom/stl.hpp"
#include "brachy/service/http_server.hpp"
#include "brachy/service/pipeline.hpp"
#include "brachy/service/session.hpp"
#include "brachy/service/slice_image.hpp"
#include "brachy/volume/nrrd.hpp"
#include "brachy/volume/phantom.hpp"
#include "support/oracles.hpp"

// After Eigen: resolv.h defines a _res macro that clashes with Eigen.
#include <httplib.h>

using namespace brachy;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kDepth = 90.0;
constexpr std::array<std::uint8_t, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

// Phantom written to disk once per process and shared by the cases.
struct Scene {
  fs::path dir;
  PhantomSpec spec;
  PhantomScene scene;
  std::vector<LandmarkPick> picks;
  RoiBox roi;

  std::string volume_path() const { return (dir / "volume.nrrd").string(); }
  std::string tumor_path() const { return (dir / "tumor.stl").string(); }
};

const Scene& scene() {
  static const Scene s = [] {
    Scene out;
    out.dir = fs::temp_directory_path() / ("brachy_service_" + std::to_string(::getpid()));
    fs::create_directories(out.dir);
    out.spec = default_phantom_spec();
    out.scene = generate_phantom(out.spec);
    write_nrrd_file(out.dir / "volume.nrrd", out.scene.volume);
    write_stl_file(out.dir / "tumor.stl", out.scene.tumor_mesh);
    const auto features = out.spec.config.effective_landmarks();
    for (int i = 0; i < 3; ++i) {
      out.picks.push_back({features[std::size_t(i)].id, out.scene.landmark_truth.target.col(i), std::nullopt});
    }
    out.roi = {{10, 10, 60}, {150, 150, 110}};
    return out;
  }();
  static const struct Cleanup {
    fs::path dir;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  } cleanup{s.dir};
  return s;
}

PipelineFiles pipeline_files() {
  const auto& s = scene();
  PipelineFiles f;
  f.volume_path = s.volume_path();
  f.config = s.spec.config;
  f.landmarks = s.picks;
  f.threshold = s.spec.hole_threshold();
  f.roi = s.roi;
  f.tumor_mesh_path = s.tumor_path();
  f.depth = kDepth;
  return f;
}

std::set<std::string> selected_ids(const Plan& p) {
  std::set<std::string> ids;
  for (const auto& n : p.needles)
    if (n.selected) ids.insert(n.hole_id);
  return ids;
}

// Capsule hit set from the true pose, plus holes too close to call.
std::pair<std::set<std::string>, std::set<std::string>> truth_hits(const Scene& s, double depth) {
  std::set<std::string> hits, near;
  const auto& c = s.spec.config;
  for (const auto& h : hole_grid(c)) {
    const double d = oracle::segment_point_distance(s.spec.pose(h.entry), s.spec.pose(h.entry + depth * h.direction),
                                                    s.scene.tumor_center);
    const double reach = s.scene.tumor_radius + c.needle_radius;
    if (std::abs(d - reach) < 0.5) near.insert(h.id);
    if (d <= reach) hits.insert(h.id);
  }
  return {hits, near};
}

double pose_rms(const RigidTransformd& a, const RigidTransformd& b, const TemplateConfig& c) {
  const PointCloud pts = superior_surface_points(c);
  return std::sqrt((transform_points(a, pts) - transform_points(b, pts)).colwise().squaredNorm().mean());
}

json landmark_command(const LandmarkPick& p, int index) {
  return {{"index", index}, {"feature", p.feature}, {"point", {p.image_point.x(), p.image_point.y(), p.image_point.z()}}};
}

// Commands that take a fresh session to the same plan as pipeline_files().
std::vector<std::pair<std::string, json>> scripted_commands() {
  const auto& s = scene();
  std::vector<std::pair<std::string, json>> cmds;
  cmds.push_back({"load-volume", {{"path", s.volume_path()}}});
  for (int i = 0; i < 3; ++i) cmds.push_back({"set-landmark", landmark_command(s.picks[std::size_t(i)], i)});
  cmds.push_back({"register-initial", json::object()});
  cmds.push_back({"set-roi", {{"lower", s.roi.lower}, {"upper", s.roi.upper}}});
  cmds.push_back({"set-threshold", {{"value", s.spec.hole_threshold()}, {"preview_limit", 10}}});
  cmds.push_back({"run-icp", json::object()});
  cmds.push_back({"set-tumor", {{"mesh_path", s.tumor_path()}}});
  cmds.push_back({"select-needles", {{"depth", kDepth}}});
  return cmds;
}

struct RunningServer {
  SessionStore store;
  ApiServer server;
  int port;
  std::thread thread;

  RunningServer() : server(store, ServerOptions{"127.0.0.1", 0, std::nullopt}), port(server.bind()) {
    thread = std::thread([this] { server.run(); });
  }
  ~RunningServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
};

json post_command(httplib::Client& c, const std::string& id, std::uint64_t revision, const std::string& type,
                  const json& payload, int expect_status = 200) {
  const json body = {{"revision", revision}, {"type", type}, {"payload", payload}};
  auto res = c.Post("/sessions/" + id + "/commands", body.dump(), "application/json");
  REQUIRE(res);
  CHECK_MESSAGE(res->status == expect_status, type << ": " << res->body);
  return json::parse(res->body);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BRACHY_CLI) + " " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("phantom end to end") {
    const auto& s = scene();
    const auto r = run_pipeline(pipeline_files());
    CHECK(pose_rms(r.plan.pose, s.spec.pose, s.spec.config) < 0.5);
    const auto [hits, near] = truth_hits(s, kDepth);
    CHECK(near.empty());
    CHECK(selected_ids(r.plan) == hits);
    CHECK(r.report.selected == hits.size());
    CHECK(r.report.fre < 1e-6);
    CHECK(r.report.image_points > 0);
    const std::vector<std::string> order{"load", "landmarks", "crop", "threshold", "icp", "tumor", "select"};
    REQUIRE(r.report.timings.size() == order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      CHECK(r.report.timings[i].stage == order[i]);
      CHECK(r.report.timings[i].ms >= 0);
    }
    CHECK(r.plan.needles.size() == hole_grid(s.spec.config).size());
    CHECK(r.plan.provenance.volume_id == volume_id(s.scene.volume));
    CHECK(r.plan.provenance.config_hash == config_hash(s.spec.config));
  }

  TEST_CASE("deterministic plan bytes") {
    CHECK(export_plan(run_pipeline(pipeline_files()).plan) == export_plan(run_pipeline(pipeline_files()).plan));
  }

  TEST_CASE("label-map tumour source gives the same selection") {
    const auto& s = scene();
    PipelineInputs in;
    in.volume = s.scene.volume;
    in.config = s.spec.config;
    in.landmarks = s.picks;
    in.threshold = s.spec.hole_threshold();
    in.roi = s.roi;
    in.tumor.label = tumor_label_volume(s.scene);
    in.depth = kDepth;
    CHECK(selected_ids(run_pipeline(in).plan) == truth_hits(s, kDepth).first);
  }

  TEST_CASE("two landmarks fail in the landmark stage") {
    auto f = pipeline_files();
    f.landmarks.pop_back();
    try {
      run_pipeline(f);
      FAIL("expected a stage error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "landmarks");
      CHECK(e.input_fault());
    }
  }

  TEST_CASE("errors carry their stage") {
    auto f = pipeline_files();
    f.volume_path = (scene().dir / "missing.nrrd").string();
    try {
      run_pipeline(f);
      FAIL("expected a stage error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "load");
    }
    f = pipeline_files();
    f.threshold = 1e6;
    try {
      run_pipeline(f);
      FAIL("expected a stage error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "threshold");
    }
    f = pipeline_files();
    f.roi = RoiBox{{0, 0, 0}, {500, 10, 10}};
    try {
      run_pipeline(f);
      FAIL("expected a stage error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "crop");
    }
  }

  TEST_CASE("landmark json forms") {
    const json pairs = json::parse(R"([{"source":[0,0,0],"target":[1,2,3]},{"source":[1,0,0],"target":[2,2,3]}])");
    const auto a = landmarks_from_json(pairs);
    REQUIRE(a.size() == 2);
    CHECK(a[1].model_point == Vec3d(1, 0, 0));
    CHECK(a[1].image_point == Vec3d(2, 2, 3));
    const auto b = landmarks_from_json(json::parse(R"({"landmarks":[{"feature":"A1","point":[1,2,3]}]})"));
    REQUIRE(b.size() == 1);
    CHECK(b[0].feature == "A1");
    CHECK_FALSE(b[0].model_point.has_value());
    CHECK_THROWS(landmarks_from_json(json::parse(R"([{"target":[1,2,3]}])")));
    CHECK(parse_roi("1,2,3,4,5,6").upper == Index3{4, 5, 6});
    CHECK_THROWS_AS(parse_roi("1,2,3"), InputError);
  }
}

TEST_SUITE("session") {
  TEST_CASE("scripted session matches the pipeline plan") {
    SessionStore store(scene().spec.config);
    const auto id = store.create();
    std::uint64_t rev = 0;
    for (const auto& [type, payload] : scripted_commands()) {
      const auto out = store.command(id, rev, type, payload);
      CHECK(out.mutated);
      CHECK(out.delta["revision"].get<std::uint64_t>() == rev + 1);
      ++rev;
    }
    CHECK(store.snapshot(id)->revision == rev);
    CHECK(store.snapshot(id)->fre < 1e-6);
    const auto exported = store.command(id, rev, "export-plan", json::object());
    CHECK_FALSE(exported.mutated);
    CHECK(store.snapshot(id)->revision == rev);
    CHECK(export_plan(session_plan(*store.snapshot(id))) == export_plan(run_pipeline(pipeline_files()).plan));
  }

  TEST_CASE("register-initial reports the FRE") {
    SessionStore store(scene().spec.config);
    const auto id = store.create();
    auto cmds = scripted_commands();
    for (int i = 0; i < 4; ++i) store.command(id, std::uint64_t(i), cmds[std::size_t(i)].first, cmds[std::size_t(i)].second);
    const auto out = store.command(id, 4, "register-initial", json::object());
    CHECK(out.delta["changed"]["fre"].get<double>() < 1e-6);
  }

  TEST_CASE("stage order, conflicts and failed commands") {
    SessionStore store(scene().spec.config);
    const auto id = store.create();
    const auto cmds = scripted_commands();
    CHECK_THROWS_AS(store.command(id, 0, "run-icp", json::object()), StageError);
    CHECK_THROWS_AS(store.command(id, 0, "select-needles", {{"depth", 50}}), StageError);
    CHECK_THROWS_AS(store.command(id, 0, "set-landmark", cmds[1].second), StageError);
    CHECK(store.snapshot(id)->revision == 0);

    store.command(id, 0, cmds[0].first, cmds[0].second);
    CHECK_THROWS_AS(store.command(id, 0, "set-threshold", {{"value", 1}}), ConflictError);
    const auto high = store.command(id, 1, "set-threshold", {{"value", 1e6}});
    CHECK(high.delta["changed"]["point_count"] == 0);
    CHECK(high.delta["changed"]["preview"].empty());
    CHECK(store.snapshot(id)->revision == 2);

    store.command(id, 2, cmds[1].first, cmds[1].second);
    CHECK_THROWS_AS(store.command(id, 3, "register-initial", json::object()), StageError);
    try {
      store.command(id, 3, "register-initial", json::object());
    } catch (const StageError& e) {
      CHECK(e.stage() == "landmarks");
    }
    CHECK_THROWS_AS(store.command(id, 3, "load-volume", cmds[0].second), StageError);
    CHECK_THROWS_AS(store.command(id, 3, "set-landmark", {{"index", 1}, {"feature", "nope"}, {"point", {0, 0, 0}}}),
                    InputError);
    CHECK_THROWS_AS(store.command(id, 3, "frobnicate", json::object()), InputError);
    CHECK(store.snapshot(id)->revision == 3);
    CHECK_THROWS_AS(store.snapshot("s999"), NotFound);
  }

  TEST_CASE("needle edits") {
    SessionStore store(scene().spec.config);
    const auto id = store.create();
    std::uint64_t rev = 0;
    for (const auto& [type, payload] : scripted_commands()) store.command(id, rev++, type, payload);
    const auto before = export_plan(session_plan(*store.snapshot(id)));

    CHECK_THROWS_AS(store.command(id, rev, "toggle-needle", {{"id", "Z42"}}), InputError);
    CHECK(store.snapshot(id)->revision == rev);
    CHECK(export_plan(session_plan(*store.snapshot(id))) == before);

    const auto on = store.command(id, rev++, "toggle-needle", {{"id", "A1"}});
    CHECK(on.delta["changed"]["needle"]["selected"] == true);
    store.command(id, rev++, "set-depth", {{"id", "A1"}, {"depth", 42.5}});
    CHECK_THROWS_AS(store.command(id, rev, "set-depth", {{"id", "A1"}, {"depth", 0}}), InputError);
    const Plan p = session_plan(*store.snapshot(id));
    const auto a1 = std::find_if(p.needles.begin(), p.needles.end(), [](const auto& n) { return n.hole_id == "A1"; });
    REQUIRE(a1 != p.needles.end());
    CHECK(a1->selected);
    CHECK(a1->depth == 42.5);
    store.command(id, rev++, "toggle-needle", {{"id", "A1"}});
    CHECK(store.snapshot(id)->revision == rev);
  }

  TEST_CASE("nudge moves the pose and clears the selection") {
    SessionStore store(scene().spec.config);
    const auto id = store.create();
    std::uint64_t rev = 0;
    for (const auto& [type, payload] : scripted_commands()) store.command(id, rev++, type, payload);
    const RigidTransformd before = *store.snapshot(id)->pose;
    const auto out = store.command(id, rev++, "nudge-pose", {{"rotation_deg", {0, 0, 0}}, {"translation", {1, -2, 0.5}}});
    const RigidTransformd after = *store.snapshot(id)->pose;
    CHECK((after.translation() - before.translation() - Vec3d(1, -2, 0.5)).norm() < 1e-12);
    CHECK(rotation_distance(after, before) < 1e-12);
    CHECK(store.snapshot(id)->needles.empty());
    CHECK_THROWS_AS(session_plan(*store.snapshot(id)), StageError);
    store.command(id, rev++, "nudge-pose", {{"rotation_deg", {0, 0, 3}}});
    CHECK(rotation_distance(*store.snapshot(id)->pose, after) == doctest::Approx(3 * M_PI / 180));
  }

  TEST_CASE("mesh json roundtrip") {
    const auto m = icosphere(Vec3d(1, 2, 3), 4, 1);
    const auto back = mesh_from_json(json::parse(mesh_to_json(m).dump()));
    CHECK(back.vertices == m.vertices);
    CHECK(back.triangles == m.triangles);
  }
}

TEST_SUITE("slices") {
  TEST_CASE("png encoding") {
    const auto& vol = scene().scene.volume;
    const auto img = extract_slice(vol, PlaneAxis::Axial, 70, std::nullopt, std::nullopt);
    CHECK(img.width == vol.dims()[0]);
    CHECK(img.height == vol.dims()[1]);
    const auto png = encode_png(img);
    REQUIRE(png.size() > 8);
    CHECK(std::equal(png.begin(), png.begin() + 8, kPngSignature.begin()));
    CHECK_THROWS_AS(extract_slice(vol, PlaneAxis::Axial, 500, std::nullopt, std::nullopt), InputError);
    CHECK_THROWS_AS(parse_plane_axis("oblique"), InputError);
  }
}

TEST_SUITE("http") {
  TEST_CASE("health and session lifecycle") {
    RunningServer srv;
    auto c = srv.client();
    auto health = c.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(json::parse(health->body)["version"].is_string());

    auto created = c.Post("/sessions", "", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string id = json::parse(created->body)["id"];
    auto got = c.Get("/sessions/" + id);
    REQUIRE(got);
    CHECK(got->status == 200);
    CHECK(json::parse(got->body)["revision"] == 0);

    auto missing = c.Get("/sessions/s999");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto bad = c.Post("/sessions/" + id + "/commands", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
  }

  TEST_CASE("scripted session over HTTP reproduces the pipeline plan") {
    RunningServer srv;
    auto c = srv.client();
    const auto cfg = to_json(scene().spec.config);
    auto created = c.Post("/sessions", json{{"template", json::parse(cfg.dump())}}.dump(), "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const std::string id = json::parse(created->body)["id"];
    std::uint64_t rev = 0;
    for (const auto& [type, payload] : scripted_commands()) {
      const auto delta = post_command(c, id, rev, type, payload);
      CHECK(delta["revision"] == rev + 1);
      ++rev;
    }
    auto plan = c.Get("/sessions/" + id + "/plan");
    REQUIRE(plan);
    CHECK(plan->status == 200);
    CHECK(plan->body == export_plan(run_pipeline(pipeline_files()).plan));

    // Stale revision, stage order and unknown ids map to distinct statuses.
    const auto conflict = post_command(c, id, rev - 1, "toggle-needle", {{"id", "A1"}}, 409);
    CHECK(conflict["error"]["current_revision"] == rev);
    post_command(c, id, rev, "toggle-needle", {{"id", "Q99"}}, 400);

    auto slice = c.Get("/sessions/" + id + "/slice?axis=coronal&index=80&window=1000&level=500");
    REQUIRE(slice);
    CHECK(slice->status == 200);
    CHECK(slice->get_header_value("Content-Type") == "image/png");
    CHECK(slice->body.substr(1, 3) == "PNG");
    auto bad_slice = c.Get("/sessions/" + id + "/slice?axis=axial&index=9999");
    REQUIRE(bad_slice);
    CHECK(bad_slice->status == 400);

    for (const char* what : {"template", "obturator", "needles", "tumor"}) {
      auto m = c.Get("/sessions/" + id + "/meshes/" + what);
      REQUIRE(m);
      CHECK_MESSAGE(m->status == 200, what);
      const auto j = json::parse(m->body);
      CHECK(j["vertices"].size() > 0);
      CHECK(j["triangles"].size() > 0);
    }
    auto tumor = mesh_from_json(json::parse(c.Get("/sessions/" + id + "/meshes/tumor")->body));
    CHECK(tumor.triangle_count() == scene().scene.tumor_mesh.triangle_count());

    auto contours = c.Get("/sessions/" + id + "/contours?axis=axial&index=45");
    REQUIRE(contours);
    CHECK(contours->status == 200);
    const auto cj = json::parse(contours->body);
    bool tumor_ring = false;
    for (const auto& item : cj["items"]) {
      if (item["object"] == "tumor" && !item["polylines"].empty()) tumor_ring = item["polylines"][0]["closed"].get<bool>();
    }
    CHECK(tumor_ring);
  }

  TEST_CASE("plan before selection is a stage error") {
    RunningServer srv;
    auto c = srv.client();
    const std::string id = json::parse(c.Post("/sessions", "", "application/json")->body)["id"];
    auto plan = c.Get("/sessions/" + id + "/plan");
    REQUIRE(plan);
    CHECK(plan->status == 422);
    post_command(c, id, 0, "run-icp", json::object(), 422);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    const auto& s = scene();
    const fs::path out = s.dir / "cli";
    fs::create_directories(out);
    REQUIRE(run_cli("phantom --out " + out.string()) == 0);
    const std::string common = " --volume " + (out / "volume.nrrd").string() + " --config " +
                               (out / "template.json").string() + " --threshold " +
                               std::to_string(s.spec.hole_threshold()) + " --tumor-mesh " +
                               (out / "tumor.stl").string() + " --depth 90";
    CHECK(run_cli("pipeline" + common + " --landmarks " + (out / "landmarks.json").string() + " --out " +
                  (out / "plan.json").string()) == 0);
    std::ifstream in(out / "plan.json");
    const json plan = json::parse(in);
    CHECK(plan["needles"].size() == hole_grid(s.spec.config).size());

    CHECK(run_cli("pipeline --volume " + (out / "nope.nrrd").string() + " --landmarks " +
                  (out / "landmarks.json").string() + " --threshold 700 --depth 90") == 2);
    CHECK(run_cli("pipeline --bogus-flag") == 2);

    // Collinear model points make the landmark fit degenerate: a stage failure.
    std::ofstream(out / "collinear.json") << R"([{"source":[0,0,0],"target":[0,0,0]},{"source":[1,1,1],"target":[1,0,0]},)"
                                             R"({"source":[2,2,2],"target":[0,1,0]}])";
    CHECK(run_cli("pipeline" + common + " --landmarks " + (out / "collinear.json").string()) == 3);
  }
}
