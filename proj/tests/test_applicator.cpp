#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "brachy/applicator/needles.hpp"
#include "brachy/applicator/plan.hpp"
#include "brachy/applicator/template_model.hpp"
#include "brachy/geom/stl.hpp"
#include "support/oracles.hpp"

using namespace brachy;

namespace {

const std::string kFixtures = BRACHY_FIXTURE_DIR;

TemplateConfig open_config() {
  TemplateConfig c;
  c.obturator_hole_radius = 0;  // keeps the centre hole G7
  return c;
}

double ngon_area(double r, int n) { return 0.5 * n * r * r * std::sin(2 * M_PI / n); }

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

// Hole ids whose axis segment passes within radius + needle radius of the
// ball centre. Holes within `band` of tangency, or where that capsule and
// the flat-ended needle cylinder disagree at the tip, are borderline.
struct AnalyticHits {
  std::set<std::string> hits;
  std::set<std::string> borderline;
};

double cylinder_point_distance(const Vec3d& entry, const Vec3d& dir, double length, double radius, const Vec3d& p) {
  const Vec3d m = p - entry;
  const double t = m.dot(dir);
  const double axial = std::max({0.0, -t, t - length});
  const double radial = std::max(0.0, (m - t * dir).norm() - radius);
  return std::hypot(axial, radial);
}

AnalyticHits analytic_hits(const TemplateConfig& c, const RigidTransformd& pose, double depth, const Vec3d& centre,
                           double radius, double band) {
  AnalyticHits out;
  for (const auto& h : hole_grid(c)) {
    const Vec3d entry = pose(h.entry), dir = pose.rotation_matrix() * h.direction;
    const double d = oracle::segment_point_distance(entry, entry + depth * dir, centre);
    const double reach = radius + c.needle_radius;
    const bool capsule = d < reach;
    const bool cylinder = cylinder_point_distance(entry, dir, depth, c.needle_radius, centre) < radius;
    if (std::abs(d - reach) < band || capsule != cylinder) {
      out.borderline.insert(h.id);
    } else if (capsule) {
      out.hits.insert(h.id);
    }
  }
  return out;
}

Plan random_plan(std::mt19937_64& rng, const TemplateConfig& c) {
  std::uniform_real_distribution<double> u(0, 1), big(-1e4, 1e4);
  Plan p;
  p.pose = oracle::random_transform(rng, M_PI, 200);
  for (const auto& h : hole_grid(c)) {
    if (u(rng) < 0.3) continue;
    p.needles.push_back({h.id, u(rng) < 0.5, u(rng) * c.max_needle_length, u(rng) * 2});
  }
  p.provenance.volume_id = "v" + std::to_string(rng() % 100000);
  const int n = int(rng() % 6);
  p.provenance.landmarks.source = oracle::random_cloud(rng, n, 100);
  p.provenance.landmarks.target = oracle::random_cloud(rng, n, 100);
  p.provenance.icp = {int(rng() % 100), u(rng) * 1e-3 * big(rng), u(rng) < 0.5 ? "stalled" : "epsilon-reached"};
  p.provenance.config_hash = config_hash(c);
  return p;
}

}  // namespace

TEST_SUITE("template config") {
  TEST_CASE("hole grid examples") {
    TemplateConfig one;
    one.rows = one.cols = 1;
    one.obturator_hole_radius = 0;
    one.plate_width = one.plate_height = 20;
    one.landmarks = {{"a", {0, 0, 0}}, {"b", {5, 0, 0}}, {"c", {0, 5, 0}}};
    const auto single = hole_grid(one);
    REQUIRE(single.size() == 1);
    CHECK(single[0].id == "A1");
    CHECK(single[0].entry == Vec3d::Zero());

    const TemplateConfig def;
    const auto holes = hole_grid(def);
    const auto& a1 = find_hole(holes, "A1");
    const auto& m13 = find_hole(holes, "M13");
    CHECK((a1.entry - m13.entry).norm() == doctest::Approx(120 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(a1.entry.y() > 0);
    CHECK(a1.entry.x() < 0);
    for (const auto& h : holes) {
      CHECK(h.entry.head<2>().norm() > def.obturator_hole_radius + def.hole_radius);
      CHECK(h.entry.z() == 0);
      CHECK(h.direction == Vec3d(0, 0, -1));
    }
    CHECK(holes.size() == 169 - 5);
    CHECK_THROWS_AS(find_hole(holes, "G7"), InputError);
  }

  TEST_CASE("hole grid is deterministic and row-major") {
    const auto a = hole_grid(TemplateConfig{}), b = hole_grid(TemplateConfig{});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].id == b[i].id);
      CHECK(a[i].entry == b[i].entry);
    }
    CHECK(a.front().id == "A1");
    CHECK(a[1].id == "A2");
    CHECK(a.back().id == "M13");
  }

  TEST_CASE("invariants are enforced") {
    TemplateConfig c;
    c.pitch = 3.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = {};
    c.landmarks = {{"a", {0, 0, 0}}, {"b", {1, 1, 0}}, {"c", {2, 2, 0}}};
    CHECK_THROWS_AS(c.validate(), InputError);
    c.landmarks = {{"a", {0, 0, 0}}, {"a", {1, 0, 0}}, {"c", {0, 1, 0}}};
    CHECK_THROWS_AS(c.validate(), InputError);
    c = {};
    c.plate_width = 100;
    CHECK_THROWS_AS(c.validate(), InputError);
    CHECK_NOTHROW(TemplateConfig{}.validate());
  }

  TEST_CASE("json roundtrip and hash") {
    TemplateConfig c;
    c.rows = 7;
    c.needle_radius = 0.65;
    const auto back = template_config_from_json(nlohmann::json::parse(to_json(c).dump()));
    CHECK(to_json(back) == to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c) != config_hash(TemplateConfig{}));
    CHECK(config_hash(c).size() == 16);
    auto j = nlohmann::json::parse(to_json(c).dump());
    j["pich"] = 3;
    CHECK_THROWS(template_config_from_json(j));
  }
}

TEST_SUITE("template meshes") {
  TEST_CASE("plain plate box") {
    const TemplateConfig c;
    const auto box = box_mesh(Vec3d(-c.plate_width / 2, -c.plate_height / 2, -c.plate_thickness),
                              Vec3d(c.plate_width / 2, c.plate_height / 2, 0));
    CHECK(box.triangle_count() == 12);
    CHECK(mesh_volume(box) == doctest::Approx(c.plate_width * c.plate_height * c.plate_thickness));
  }

  TEST_CASE("plate with bores is watertight with the expected volume") {
    for (const TemplateConfig& c : {TemplateConfig{}, open_config()}) {
      const auto mesh = template_mesh(c);
      const auto topo = topology(mesh);
      CHECK(topo.closed_manifold());
      const std::size_t bores = hole_grid(c).size() + (c.obturator_hole_radius > 0 ? 1 : 0);
      CHECK(topo.euler() == 2 - 2 * long(bores));  // genus = number of through-holes
      double cut = double(hole_grid(c).size()) * ngon_area(c.hole_radius, c.bore_sides);
      if (c.obturator_hole_radius > 0) cut += ngon_area(c.obturator_hole_radius, c.bore_sides);
      const double expect = (c.plate_width * c.plate_height - cut) * c.plate_thickness;
      CHECK(std::abs(mesh_volume(mesh) - expect) < 1e-6 * expect);
      const auto bb = bounding_box(mesh);
      CHECK((bb.min - Vec3d(-c.plate_width / 2, -c.plate_height / 2, -c.plate_thickness)).norm() < 1e-9);
      CHECK((bb.max - Vec3d(c.plate_width / 2, c.plate_height / 2, 0)).norm() < 1e-9);
    }
  }

  TEST_CASE("obturator prism volume") {
    TemplateConfig c;
    for (int n : {3, 12, 40}) {
      c.bore_sides = n;
      const auto m = obturator_mesh(c);
      CHECK(std::abs(mesh_volume(m) - ngon_area(c.obturator_radius, n) * c.obturator_length) < 1e-9);
      CHECK(topology(m).closed_manifold());
      const auto bb = bounding_box(m);
      CHECK(bb.min.z() == doctest::Approx(-c.obturator_length));
      CHECK(bb.max.z() == doctest::Approx(0.0));
    }
  }

  TEST_CASE("golden fixtures") {
    const TemplateConfig c = load_template_config(kFixtures + "/template_small.json");
    const auto param_t = parametric_template_mesh(c);
    const auto param_o = parametric_obturator_mesh(c);
    const auto gold_t = read_stl_file(kFixtures + "/template_small.stl").mesh;
    const auto gold_o = read_stl_file(kFixtures + "/obturator_small.stl").mesh;
    for (auto [a, b] : {std::pair{&param_t, &gold_t}, std::pair{&param_o, &gold_o}}) {
      const auto ba = bounding_box(*a), bb = bounding_box(*b);
      CHECK((ba.min - bb.min).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((ba.max - bb.max).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(a->triangle_count() == b->triangle_count());
    }
    TemplateConfig overridden = c;
    overridden.template_stl = kFixtures + "/template_small.stl";
    overridden.obturator_stl = kFixtures + "/obturator_small.stl";
    CHECK(template_mesh(overridden).triangle_count() == gold_t.triangle_count());
    CHECK(obturator_mesh(overridden).triangle_count() == gold_o.triangle_count());
  }

  TEST_CASE("superior surface points") {
    const TemplateConfig c;
    SurfaceSampling one;
    one.rim_points = 0;
    one.axis_step = 0;
    const auto entries = superior_surface_points(c, one);
    const auto holes = hole_grid(c);
    REQUIRE(entries.cols() == Eigen::Index(holes.size()));
    for (std::size_t i = 0; i < holes.size(); ++i) CHECK(entries.col(Eigen::Index(i)) == holes[i].entry);

    SurfaceSampling dense;
    dense.rim_points = 8;
    dense.axis_step = 0.7;
    const auto pts = superior_surface_points(c, dense);
    CHECK(pts.cols() == Eigen::Index(holes.size()) * (1 + 8 + 28));
    CHECK(pts.row(2).maxCoeff() <= 0.0);
    CHECK(pts.row(2).minCoeff() >= -c.plate_thickness);
    dense.axis_step = -1;
    CHECK_THROWS_AS(superior_surface_points(c, dense), InputError);
  }
}

TEST_SUITE("needles") {
  TEST_CASE("geometry") {
    const Hole h{"X", Vec3d::Zero(), Vec3d(0, 0, -1)};
    const auto g = needle_geometry(h, 50, 1.0, 12);
    CHECK(g.axis.start == Vec3d::Zero());
    CHECK((g.axis.end - Vec3d(0, 0, -50)).norm() < 1e-12);
    double max_r = 0;
    for (Eigen::Index v = 0; v < g.mesh.vertex_count(); ++v) max_r = std::max(max_r, g.mesh.vertices.col(v).head<2>().norm());
    CHECK(max_r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(topology(g.mesh).closed_manifold());
    CHECK(mesh_volume(g.mesh) == doctest::Approx(ngon_area(1.0, 12) * 50));
    CHECK_THROWS_AS(needle_geometry(h, 0, 1, 12), InputError);
    CHECK_THROWS_AS(needle_geometry(h, -3, 1, 12), InputError);

    const Hole tilted{"Y", Vec3d(1, 2, 3), Vec3d(1, 1, 1).normalized()};
    const auto t = needle_geometry(tilted, 10, 0.5, 7);
    CHECK((t.axis.end - (tilted.entry + 10 * tilted.direction)).norm() < 1e-12);
    CHECK(topology(t.mesh).closed_manifold());
    for (Eigen::Index v = 0; v < t.mesh.vertex_count(); ++v) {
      const Vec3d m = t.mesh.vertices.col(v) - tilted.entry;
      CHECK((m - m.dot(tilted.direction) * tilted.direction).norm() == doctest::Approx(0.5));
    }
  }

  TEST_CASE("ball on the centre hole axis is selected") {
    const auto c = open_config();
    const auto holes = hole_grid(c);
    const Hole& g7 = find_hole(holes, "G7");
    const ObbTree tumor(icosphere(g7.entry + 30 * g7.direction, 5, 3));
    const auto ids = select_needles(c, RigidTransformd::identity(), 60, tumor);
    CHECK(as_set(ids).count("G7") == 1);
    const ObbTree far(icosphere(Vec3d(500, 0, 0), 5, 3));
    CHECK(select_needles(c, RigidTransformd::identity(), 60, far).empty());
  }

  TEST_CASE("selection matches the segment-sphere oracle") {
    const TemplateConfig c;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> xy(-60, 60), z(-140, -10), rad(4, 20), dep(20, 150);
    int total_hits = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const auto pose = oracle::random_transform(rng, 0.3, 50);
      const Vec3d centre = pose(Vec3d(xy(rng), xy(rng), z(rng)));
      const double r = rad(rng), depth = dep(rng);
      const ObbTree tumor(icosphere(centre, r, 4));
      const auto got = as_set(select_needles(c, pose, depth, tumor));
      const auto oracle_hits = analytic_hits(c, pose, depth, centre, r, 0.1);
      for (const auto& id : oracle_hits.hits) CHECK(got.count(id) == 1);
      for (const auto& id : got) CHECK((oracle_hits.hits.count(id) + oracle_hits.borderline.count(id)) == 1);
      total_hits += int(oracle_hits.hits.size());
    }
    CHECK(total_hits > 50);
  }

  TEST_CASE("monotone in depth, equivariant under a common motion, spans agree") {
    const TemplateConfig c;
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> xy(-40, 40), z(-90, -20), rad(5, 15);
    for (int trial = 0; trial < 8; ++trial) {
      const auto pose = oracle::random_transform(rng, 0.3, 30);
      const auto tumor_mesh = icosphere(pose(Vec3d(xy(rng), xy(rng), z(rng))), rad(rng), 3);
      const ObbTree tumor(tumor_mesh);
      std::set<std::string> prev;
      for (double depth : {10.0, 40.0, 70.0, 100.0, 140.0}) {
        const auto cur = as_set(select_needles(c, pose, depth, tumor));
        CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
      }
      const auto g = oracle::random_transform(rng, M_PI, 100);
      const ObbTree moved(transform_mesh(g, tumor_mesh));
      CHECK(as_set(select_needles(c, compose(g, pose), 100, moved)) == as_set(select_needles(c, pose, 100, tumor)));

      const auto selected = as_set(select_needles(c, pose, 100, tumor));
      const auto holes = hole_grid(c);
      for (std::size_t i = 0; i < holes.size(); ++i) {
        const Hole& h = holes[i];
        if (i % 7 != 0 && !selected.count(h.id)) continue;
        const auto span = intersection_span(c, h, pose, 100, tumor);
        CHECK(span.has_value() == (selected.count(h.id) == 1));
      }
    }
  }

  TEST_CASE("intersection span") {
    auto c = open_config();
    c.needle_radius = 0;
    const auto grid = hole_grid(c);
    const Hole& g7 = find_hole(grid, "G7");
    const ObbTree ball(icosphere(g7.entry + 30 * g7.direction, 5, 4));
    const auto span = intersection_span(c, g7, RigidTransformd::identity(), 100, ball);
    REQUIRE(span.has_value());
    CHECK(std::abs(span->entry - 25.0) <= 0.1);
    CHECK(std::abs(span->exit - 35.0) <= 0.1);
    const ObbTree far(icosphere(Vec3d(500, 0, 0), 5, 3));
    CHECK_FALSE(intersection_span(c, g7, RigidTransformd::identity(), 100, far).has_value());
    CHECK_THROWS_AS(intersection_span(c, g7, RigidTransformd::identity(), 0, ball), InputError);

    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> s(15, 120), rad(3, 12);
    c.needle_radius = 1.0;
    const auto holes = hole_grid(c);
    for (int trial = 0; trial < 20; ++trial) {
      const auto pose = oracle::random_transform(rng, M_PI, 50);
      const Hole& h = holes[rng() % holes.size()];
      const double depth = s(rng), r = rad(rng);
      const Vec3d centre = pose(h.entry + depth * h.direction);
      const ObbTree tumor(icosphere(centre, r, 4));
      const auto expect = oracle::line_ball_span(pose(h.entry), pose.rotation_matrix() * h.direction, centre, r);
      REQUIRE(expect.has_value());
      const auto got = intersection_span(c, h, pose, 150, tumor);
      REQUIRE(got.has_value());
      CHECK(std::abs(got->entry - std::max(0.0, expect->first)) <= 0.2);
      CHECK(std::abs(got->exit - std::min(150.0, expect->second)) <= 0.2);
    }
  }
}

TEST_SUITE("plan") {
  TEST_CASE("empty plan roundtrip") {
    Plan p;
    const auto text = export_plan(p);
    const auto back = import_plan(text);
    CHECK(export_plan(back) == text);
    CHECK(back.needles.empty());
    CHECK(rotation_distance(back.pose, RigidTransformd::identity()) == 0.0);
    CHECK(back.schema_version == kPlanSchemaVersion);
  }

  TEST_CASE("selected entries") {
    Plan p;
    p.needles = {{"A1", true, 50, 1}, {"A2", false, 0, 1}, {"B3", true, 60, 1}, {"C4", true, 70.5, 1}};
    const auto j = nlohmann::json::parse(export_plan(p));
    int selected = 0;
    for (const auto& n : j["needles"]) selected += n["selected"].get<bool>();
    CHECK(selected == 3);
    CHECK(p.selected_count() == 3);
  }

  TEST_CASE("schema and invariant errors") {
    Plan p;
    p.needles = {{"A1", true, 50, 1}};
    auto j = nlohmann::json::parse(export_plan(p));
    auto bumped = j;
    bumped["schema_version"] = kPlanSchemaVersion + 1;
    CHECK_THROWS_AS(import_plan(bumped.dump()), SchemaError);
    auto extra = j;
    extra["future_field"] = 1;
    CHECK_THROWS_AS(import_plan(extra.dump()), SchemaError);
    auto dup = j;
    dup["needles"].push_back(dup["needles"][0]);
    CHECK_THROWS_AS(import_plan(dup.dump()), InputError);
    auto neg = j;
    neg["needles"][0]["depth"] = -1;
    CHECK_THROWS_AS(import_plan(neg.dump()), InputError);
    CHECK_THROWS(import_plan("{not json"));

    Plan unknown;
    unknown.needles = {{"Z99", true, 10, 1}};
    CHECK_THROWS_AS(validate_plan(unknown, TemplateConfig{}), InputError);
    Plan too_deep;
    too_deep.needles = {{"A1", true, 500, 1}};
    CHECK_THROWS_AS(validate_plan(too_deep, TemplateConfig{}), InputError);
  }

  TEST_CASE("fuzzed plans are export fixed points") {
    std::mt19937_64 rng(31);
    const TemplateConfig c;
    for (int trial = 0; trial < 300; ++trial) {
      const Plan p = random_plan(rng, c);
      const auto once = export_plan(p);
      const auto back = import_plan(once);
      CHECK(export_plan(back) == once);
      REQUIRE(back.needles.size() == p.needles.size());
      for (std::size_t i = 0; i < p.needles.size(); ++i) {
        CHECK(back.needles[i].hole_id == p.needles[i].hole_id);
        CHECK(back.needles[i].selected == p.needles[i].selected);
        CHECK(back.needles[i].depth == round_sig9(p.needles[i].depth));
      }
      CHECK(back.provenance.icp.termination == p.provenance.icp.termination);
      CHECK((back.pose.translation() - p.pose.translation()).norm() < 1e-6);
      CHECK_NOTHROW(validate_plan(back, c));
    }
  }
}
