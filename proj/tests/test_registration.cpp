#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "brachy/applicator/template_model.hpp"
#include "brachy/registration/absolute_orientation.hpp"
#include "brachy/registration/icp.hpp"
#include "brachy/registration/nn_index.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <numeric>

using namespace brachy;

namespace {

PointCloud cloud(std::initializer_list<Vec3d> pts) {
  PointCloud c(3, Eigen::Index(pts.size()));
  Eigen::Index i = 0;
  for (const auto& p : pts) c.col(i++) = p;
  return c;
}

double sum_sq_residual(const RigidTransformd& t, const PointCloud& s, const PointCloud& d) {
  return (transform_points(t, s) - d).colwise().squaredNorm().sum();
}

double rms_between(const RigidTransformd& a, const RigidTransformd& b, const PointCloud& p) {
  return std::sqrt((transform_points(a, p) - transform_points(b, p)).colwise().squaredNorm().mean());
}

bool non_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("absolute orientation") {
  TEST_CASE("identical triangles give the identity") {
    const PointCloud p = cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    const auto t = absolute_orientation(p, p);
    CHECK(rotation_distance(t, RigidTransformd::identity()) < 1e-12);
    CHECK(t.translation().norm() < 1e-12);
    CHECK(fiducial_registration_error(t, {p, p}) < 1e-12);
  }

  TEST_CASE("pure translation") {
    const PointCloud p = cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {3, 1, 2}});
    const PointCloud q = p.colwise() + Vec3d(5, -2, 3);
    const auto t = absolute_orientation(p, q);
    CHECK(rotation_distance(t, RigidTransformd::identity()) < 1e-12);
    CHECK((t.translation() - Vec3d(5, -2, 3)).norm() < 1e-12);
  }

  TEST_CASE("quarter turn about z plus (1,1,0) round-trips") {
    const PointCloud p = cloud({{0, 0, 0}, {2, 0, 0}, {0, 3, 0}, {1, 1, 4}});
    const auto truth = RigidTransformd::axis_angle(Vec3d::UnitZ(), M_PI / 2, Vec3d(1, 1, 0));
    const PointCloud q = transform_points(truth, p);
    const auto t = absolute_orientation(p, q);
    CHECK((transform_points(t, p) - q).colwise().norm().maxCoeff() < 1e-9);
  }

  TEST_CASE("errors: mismatch, too few, collinear") {
    const PointCloud p3 = cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    const PointCloud p2 = cloud({{0, 0, 0}, {1, 0, 0}});
    CHECK_THROWS_AS(absolute_orientation(p3, p2), InputError);
    CHECK_THROWS_AS(absolute_orientation(p2, p2), InputError);
    const PointCloud line = cloud({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {5, 5, 5}});
    CHECK_THROWS_AS(absolute_orientation(line, line), DegenerateConfiguration);
  }

  TEST_CASE("noise-free pairs recover the generating transform") {
    std::mt19937_64 rng(101);
    for (int i = 0; i < 500; ++i) {
      const auto g = oracle::random_transform(rng, M_PI, 200);
      const PointCloud s = oracle::random_cloud(rng, 3 + i % 5, 80);
      const auto t = absolute_orientation(s, transform_points(g, s));
      CHECK(rotation_distance(t, g) < 1e-7);
      CHECK((t.translation() - g.translation()).norm() < 1e-7);
    }
  }

  TEST_CASE("solution is a minimum under small perturbations") {
    std::mt19937_64 rng(102);
    std::normal_distribution<double> noise(0.0, 0.5);
    const PointCloud s = oracle::random_cloud(rng, 6, 50);
    PointCloud d = transform_points(oracle::random_transform(rng, M_PI, 30), s);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] += noise(rng);
    const auto t = absolute_orientation(s, d);
    const double best = sum_sq_residual(t, s, d);
    for (int i = 0; i < 100; ++i) {
      const auto delta = oracle::random_transform(rng, 5 * M_PI / 180, 1.0);
      CHECK(best <= sum_sq_residual(compose(t, delta), s, d) + 1e-9);
    }
  }

  TEST_CASE("conjugation equivariance") {
    std::mt19937_64 rng(103);
    for (int i = 0; i < 100; ++i) {
      std::normal_distribution<double> noise(0.0, 0.3);
      const PointCloud s = oracle::random_cloud(rng, 5, 50);
      PointCloud d = transform_points(oracle::random_transform(rng, M_PI, 30), s);
      for (Eigen::Index k = 0; k < d.size(); ++k) d.data()[k] += noise(rng);
      const auto g = oracle::random_transform(rng, M_PI, 100);
      const auto t = absolute_orientation(s, d);
      const auto tg = absolute_orientation(transform_points(g, s), transform_points(g, d));
      const auto expect = compose(compose(g, t), invert(g));
      CHECK(rotation_distance(tg, expect) < 1e-7);
      CHECK((tg.translation() - expect.translation()).norm() < 1e-7);
    }
  }

  TEST_CASE("FRE examples") {
    const PointCloud src = cloud({{0, 0, 0}});
    const PointCloud dst = cloud({{0, 0, 2}});
    CHECK(fiducial_registration_error(RigidTransformd::identity(), {src, dst}) == doctest::Approx(2.0));

    std::mt19937_64 rng(104);
    const double sigma = 0.5;
    for (int seed = 0; seed < 100; ++seed) {
      std::normal_distribution<double> noise(0.0, sigma);
      const PointCloud s = oracle::random_cloud(rng, 4, 60);
      PointCloud d = transform_points(oracle::random_transform(rng, M_PI, 40), s);
      for (Eigen::Index k = 0; k < d.size(); ++k) d.data()[k] += noise(rng);
      const double fre = fiducial_registration_error(absolute_orientation(s, d), {s, d});
      CHECK(fre >= 0);
      CHECK(fre <= 3 * sigma);
    }
  }
}

TEST_SUITE("nearest neighbour") {
  TEST_CASE("single point cloud") {
    NNIndex idx(cloud({{1, 2, 3}}));
    std::mt19937_64 rng(201);
    for (int i = 0; i < 20; ++i) CHECK(idx.nearest(oracle::random_cloud(rng, 1, 100).col(0)).index == 0);
  }

  TEST_CASE("lattice queries at lattice points") {
    PointCloud lattice(3, 1000);
    int n = 0;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j)
        for (int k = 0; k < 10; ++k) lattice.col(n++) = Vec3d(i, j, k);
    NNIndex idx(lattice);
    for (int c = 0; c < 1000; c += 37) {
      const auto nb = idx.nearest(lattice.col(c));
      CHECK(nb.squared_distance == 0.0);
      CHECK(nb.index == c);
    }
    // Cell centres are equidistant from 8 lattice points: lowest index wins.
    for (int c = 0; c < 50; ++c) {
      const Vec3d q = lattice.col(c * 13 % 729) + Vec3d(0.5, 0.5, 0.5);
      if ((q.array() > 9).any()) continue;
      CHECK(idx.nearest(q).index == oracle::linear_nearest(lattice, q).first);
    }
  }

  TEST_CASE("matches linear scan on random clouds, with hints too") {
    std::mt19937_64 rng(202);
    const PointCloud pts = oracle::random_cloud(rng, 5000, 50);
    NNIndex idx(pts);
    std::uniform_int_distribution<int> pick(0, 4999);
    for (int i = 0; i < 500; ++i) {
      const Vec3d q = oracle::random_cloud(rng, 1, 60).col(0);
      const auto [ref, d] = oracle::linear_nearest(pts, q);
      const auto nb = idx.nearest(q);
      CHECK(nb.index == ref);
      CHECK(nb.squared_distance == d);
      CHECK(idx.nearest(q, pick(rng)).index == ref);
    }
  }

  TEST_CASE("duplicate points resolve to the lowest index") {
    PointCloud pts = PointCloud::Zero(3, 50);
    for (int i = 0; i < 50; ++i) pts.col(i) = Vec3d(i % 5, 0, 0);
    NNIndex idx(pts);
    for (int v = 0; v < 5; ++v) {
      CHECK(idx.nearest(Vec3d(v, 0.1, 0)).index == v);
      CHECK(idx.nearest(Vec3d(v, 0.1, 0), 45 + v).index == v);
    }
  }

  TEST_CASE("empty cloud is rejected") { CHECK_THROWS_AS(NNIndex(PointCloud(3, 0)), InputError); }
}

TEST_SUITE("icp") {
  TEST_CASE("identical clouds stop at the first check with zero error") {
    std::mt19937_64 rng(301);
    const PointCloud p = oracle::random_cloud(rng, 200, 30);
    const auto r = icp(p, NNIndex(p), RigidTransformd::identity(), IcpParams{});
    CHECK(r.iterations == 1);
    CHECK(r.mse_trace.size() == 1);
    CHECK(r.mse_trace[0] == 0.0);
    CHECK(r.termination == IcpTermination::EpsilonReached);
    CHECK(rotation_distance(r.transform, RigidTransformd::identity()) < 1e-12);
    CHECK(r.transform.translation().norm() < 1e-12);
  }

  TEST_CASE("huge epsilon stops after one iteration") {
    std::mt19937_64 rng(302);
    const PointCloud p = oracle::random_cloud(rng, 100, 30);
    const PointCloud u = transform_points(oracle::random_transform(rng, 0.2, 3), p);
    IcpParams params;
    params.epsilon = 1e12;
    const auto r = icp(u, NNIndex(p), RigidTransformd::identity(), params);
    CHECK(r.iterations == 1);
    CHECK(r.termination == IcpTermination::EpsilonReached);
  }

  TEST_CASE("superior surface points under a known motion are recovered") {
    TemplateConfig config;
    SurfaceSampling sampling;
    sampling.rim_points = 4;
    sampling.axis_step = 10.0;
    const PointCloud surface = superior_surface_points(config, sampling);
    REQUIRE(surface.cols() > 500);
    const auto g = RigidTransformd::axis_angle(Vec3d::UnitZ(), 5 * M_PI / 180, Vec3d(4, -3, 2));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<Eigen::Index> pick(std::size_t(surface.cols()));
      std::iota(pick.begin(), pick.end(), Eigen::Index(0));
      std::shuffle(pick.begin(), pick.end(), rng);
      PointCloud p(3, 500);
      for (Eigen::Index i = 0; i < 500; ++i) p.col(i) = surface.col(pick[std::size_t(i)]);
      const PointCloud u = transform_points(g, p);
      const auto r = icp(u, NNIndex(p), RigidTransformd::identity(), IcpParams{});
      CHECK(rms_between(r.transform, invert(g), u) < 1e-3);
      CHECK(non_increasing(r.mse_trace));
      CHECK(int(r.mse_trace.size()) == r.iterations);
    }
  }

  TEST_CASE("aligned subset is a fixed point") {
    std::mt19937_64 rng(303);
    const PointCloud p = oracle::random_cloud(rng, 300, 40);
    const auto init = oracle::random_transform(rng, M_PI, 20);
    const PointCloud u = transform_points(invert(init), p.leftCols(120));
    const auto r = icp(u, NNIndex(p), init, IcpParams{});
    CHECK(rotation_distance(r.transform, init) < 1e-9);
    CHECK((r.transform.translation() - init.translation()).norm() < 1e-9);
  }

  TEST_CASE("mse trace never increases on random problems") {
    std::mt19937_64 rng(304);
    for (int trial = 0; trial < 30; ++trial) {
      const PointCloud p = oracle::random_cloud(rng, 400, 30);
      std::normal_distribution<double> noise(0, 0.2);
      PointCloud u = transform_points(oracle::random_transform(rng, 0.4, 8), p.leftCols(250));
      for (Eigen::Index k = 0; k < u.size(); ++k) u.data()[k] += noise(rng);
      const auto r = icp(u, NNIndex(p), RigidTransformd::identity(), IcpParams{});
      CHECK(non_increasing(r.mse_trace));
      CHECK(int(r.mse_trace.size()) == r.iterations);
    }
  }

  TEST_CASE("collapsed closest-point set is degenerate") {
    const PointCloud fixed = cloud({{0, 0, 0}});
    const PointCloud moving = cloud({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    CHECK_THROWS_AS(icp(moving, NNIndex(fixed), RigidTransformd::identity(), IcpParams{}), DegenerateConfiguration);
  }

  TEST_CASE("parameter validation") {
    IcpParams p;
    p.epsilon = 0;
    CHECK_THROWS_AS(p.validate(), InputError);
    p = {};
    p.max_iterations = 0;
    CHECK_THROWS_AS(p.validate(), InputError);
    p = {};
    p.min_relative_improvement = 1.0;
    CHECK_THROWS_AS(p.validate(), InputError);
    CHECK(parse_icp_termination("stalled") == IcpTermination::Stalled);
    CHECK(to_string(IcpTermination::EpsilonReached) == "epsilon-reached");
  }
}

TEST_SUITE("residual mse") {
  TEST_CASE("examples") {
    std::mt19937_64 rng(401);
    const PointCloud p = oracle::random_cloud(rng, 100, 10);
    CHECK(residual_mse(RigidTransformd::identity(), p, NNIndex(p)) == 0.0);
    CHECK(residual_mse(RigidTransformd::identity(), cloud({{3, 4, 0}}), NNIndex(cloud({{0, 0, 0}}))) == 25.0);
  }

  TEST_CASE("matches a double loop") {
    std::mt19937_64 rng(402);
    for (int trial = 0; trial < 20; ++trial) {
      const PointCloud p = oracle::random_cloud(rng, 300, 20);
      const PointCloud u = oracle::random_cloud(rng, 200, 25);
      const auto t = oracle::random_transform(rng, M_PI, 5);
      const PointCloud tu = transform_points(t, u);
      double sum = 0;
      for (Eigen::Index i = 0; i < tu.cols(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < p.cols(); ++j) best = std::min(best, (tu.col(i) - p.col(j)).squaredNorm());
        sum += best;
      }
      CHECK(std::abs(residual_mse(t, u, NNIndex(p)) - sum / 200.0) < 1e-12 * std::max(1.0, sum));
    }
    CHECK_THROWS_AS(residual_mse(RigidTransformd::identity(), PointCloud(3, 0), NNIndex(cloud({{0, 0, 0}}))),
                    InputError);
  }
}
