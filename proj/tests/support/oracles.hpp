#pragma once

// Independent reference computations for the test suites. Nothing here
// calls the code under test except plain data types and the mesh
// primitives used to generate inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "brachy/geom/mesh.hpp"
#include "brachy/geom/transform.hpp"

namespace oracle {

using brachy::Vec3d;

inline brachy::RigidTransformd random_transform(std::mt19937_64& rng, double max_angle, double max_shift) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3d axis(g(rng), g(rng), g(rng));
  const double angle = u(rng) * max_angle;
  Vec3d shift(g(rng), g(rng), g(rng));
  shift = shift.normalized() * max_shift * std::cbrt(u(rng));
  return brachy::RigidTransformd::axis_angle(axis, angle, shift);
}

inline brachy::PointCloud random_cloud(std::mt19937_64& rng, int n, double half_width) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  brachy::PointCloud c(3, n);
  for (int i = 0; i < n; ++i) c.col(i) = Vec3d(u(rng), u(rng), u(rng));
  return c;
}

/// Index and squared distance of the nearest point, lowest index on ties.
inline std::pair<Eigen::Index, double> linear_nearest(const brachy::PointCloud& pts, const Vec3d& q) {
  Eigen::Index best = -1;
  double d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const double di = (pts.col(i) - q).squaredNorm();
    if (di < d) {
      d = di;
      best = i;
    }
  }
  return {best, d};
}

// ---------------------------------------------------------------------------
// Triangle intersection by segment/plane crossings.

inline double orient(const Vec3d& a, const Vec3d& b, const Vec3d& c, const Vec3d& d) {
  return (b - a).cross(c - a).dot(d - a);
}

/// Closed segment pq against closed triangle abc, for non-coplanar input.
inline bool segment_hits_triangle(const Vec3d& p, const Vec3d& q, const Vec3d& a, const Vec3d& b, const Vec3d& c) {
  const Vec3d n = (b - a).cross(c - a);
  const double dp = n.dot(p - a), dq = n.dot(q - a);
  if ((dp > 0 && dq > 0) || (dp < 0 && dq < 0)) return false;
  if (dp == dq) return false;  // parallel to the plane (coplanar handled elsewhere)
  const double t = dp / (dp - dq);
  const Vec3d x = p + t * (q - p);
  const double s0 = (b - a).cross(x - a).dot(n);
  const double s1 = (c - b).cross(x - b).dot(n);
  const double s2 = (a - c).cross(x - c).dot(n);
  const double tol = -1e-12 * n.squaredNorm() * (1.0 + (x - a).norm());
  return s0 >= tol && s1 >= tol && s2 >= tol;
}

/// Two non-coplanar closed triangles intersect iff an edge of one crosses
/// the other.
inline bool triangles_intersect(const std::array<Vec3d, 3>& t, const std::array<Vec3d, 3>& u) {
  for (int e = 0; e < 3; ++e) {
    if (segment_hits_triangle(t[e], t[(e + 1) % 3], u[0], u[1], u[2])) return true;
    if (segment_hits_triangle(u[e], u[(e + 1) % 3], t[0], t[1], t[2])) return true;
  }
  return false;
}

/// Smallest distance from any vertex of one triangle to the plane of the
/// other, a cheap proxy for "near a touching configuration".
inline double plane_margin(const std::array<Vec3d, 3>& t, const std::array<Vec3d, 3>& u) {
  double m = std::numeric_limits<double>::infinity();
  auto one = [&](const std::array<Vec3d, 3>& a, const std::array<Vec3d, 3>& b) {
    const Vec3d n = (b[1] - b[0]).cross(b[2] - b[0]).normalized();
    for (const auto& v : a) m = std::min(m, std::abs(n.dot(v - b[0])));
  };
  one(t, u);
  one(u, t);
  return m;
}

inline std::array<Vec3d, 3> posed_triangle(const brachy::TriangleMesh& m, Eigen::Index tri,
                                           const brachy::RigidTransformd& pose) {
  return {pose(m.corner(tri, 0)), pose(m.corner(tri, 1)), pose(m.corner(tri, 2))};
}

/// All-pairs triangle loop over the posed meshes.
inline bool brute_force_collide(const brachy::TriangleMesh& a, const brachy::RigidTransformd& pa,
                                const brachy::TriangleMesh& b, const brachy::RigidTransformd& pb) {
  for (Eigen::Index i = 0; i < a.triangles.cols(); ++i) {
    const auto ta = posed_triangle(a, i, pa);
    for (Eigen::Index j = 0; j < b.triangles.cols(); ++j) {
      if (triangles_intersect(ta, posed_triangle(b, j, pb))) return true;
    }
  }
  return false;
}

/// Random non-degenerate triangle in the cube [-half, half]^3.
inline std::array<Vec3d, 3> random_triangle(std::mt19937_64& rng, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  for (;;) {
    std::array<Vec3d, 3> t{Vec3d(u(rng), u(rng), u(rng)), Vec3d(u(rng), u(rng), u(rng)), Vec3d(u(rng), u(rng), u(rng))};
    if ((t[1] - t[0]).cross(t[2] - t[0]).norm() > 1e-3) return t;
  }
}

/// Icosphere, box, UV sphere or a random soup of up to 200 triangles.
inline brachy::TriangleMesh random_mesh(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_real_distribution<double> size(0.5, 3.0);
  switch (kind(rng)) {
    case 0:
      return brachy::icosphere(Vec3d::Zero(), size(rng), 1);  // 80 triangles
    case 1:
      return brachy::box_mesh(-Vec3d::Constant(size(rng)), Vec3d(size(rng), size(rng), size(rng)));
    case 2:
      return brachy::uv_sphere(Vec3d::Zero(), size(rng), 6, 10);
    default: {
      std::uniform_int_distribution<int> count(1, 200);
      brachy::MeshBuilder b;
      const int n = count(rng);
      for (int i = 0; i < n; ++i) {
        const auto t = random_triangle(rng, 2.0);
        b.add_triangle(b.add_vertex(t[0]), b.add_vertex(t[1]), b.add_vertex(t[2]));
      }
      return b.build();
    }
  }
}

// ---------------------------------------------------------------------------
// Convex hull intersection of two 8-point sets by LP feasibility:
// find lambda, mu >= 0 with sum lambda = sum mu = 1 and
// sum lambda_i a_i - sum mu_j b_j = 0. Phase-one simplex with Bland's rule.

inline bool hulls_intersect(const std::array<Vec3d, 8>& a, const std::array<Vec3d, 8>& b) {
  constexpr int kVars = 16, kRows = 5;
  // Tableau columns: 16 structural, 5 artificial, rhs.
  constexpr int kCols = kVars + kRows + 1;
  double t[kRows + 1][kCols] = {};
  double rhs[kRows] = {0, 0, 0, 1, 1};
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 8; ++i) {
      t[k][i] = a[std::size_t(i)][k];
      t[k][8 + i] = -b[std::size_t(i)][k];
    }
  }
  for (int i = 0; i < 8; ++i) {
    t[3][i] = 1;
    t[4][8 + i] = 1;
  }
  for (int r = 0; r < kRows; ++r) {
    if (rhs[r] < 0) {
      for (int c = 0; c < kVars; ++c) t[r][c] = -t[r][c];
      rhs[r] = -rhs[r];
    }
    t[r][kVars + r] = 1;
    t[r][kCols - 1] = rhs[r];
  }
  int basis[kRows];
  for (int r = 0; r < kRows; ++r) basis[r] = kVars + r;
  // Objective row: minimise the sum of artificials, expressed in the
  // non-basic variables.
  for (int c = 0; c < kCols; ++c) {
    double s = 0;
    for (int r = 0; r < kRows; ++r) s += t[r][c];
    t[kRows][c] = (c >= kVars && c < kVars + kRows) ? 0.0 : -s;
  }
  const double eps = 1e-12;
  for (int iter = 0; iter < 500; ++iter) {
    int enter = -1;
    for (int c = 0; c < kVars + kRows; ++c) {
      if (t[kRows][c] < -eps) {
        enter = c;
        break;
      }
    }
    if (enter < 0) break;
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < kRows; ++r) {
      if (t[r][enter] > eps) {
        const double ratio = t[r][kCols - 1] / t[r][enter];
        if (ratio < best - 1e-15 || (std::abs(ratio - best) <= 1e-15 && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave < 0) break;
    const double piv = t[leave][enter];
    for (int c = 0; c < kCols; ++c) t[leave][c] /= piv;
    for (int r = 0; r <= kRows; ++r) {
      if (r == leave || t[r][enter] == 0) continue;
      const double f = t[r][enter];
      for (int c = 0; c < kCols; ++c) t[r][c] -= f * t[leave][c];
    }
    basis[leave] = enter;
  }
  return -t[kRows][kCols - 1] < 1e-9;
}

// ---------------------------------------------------------------------------
// Needle trajectories against a ball.

inline double segment_point_distance(const Vec3d& a, const Vec3d& b, const Vec3d& p) {
  const Vec3d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

/// Depths along the axis (from `entry`, unit `dir`) where a line of
/// zero width enters and leaves the ball, if it does.
inline std::optional<std::pair<double, double>> line_ball_span(const Vec3d& entry, const Vec3d& dir, const Vec3d& c,
                                                                double r) {
  const double s = (c - entry).dot(dir);
  const double d2 = (c - entry).squaredNorm() - s * s;
  if (d2 > r * r) return std::nullopt;
  const double h = std::sqrt(r * r - d2);
  return std::make_pair(s - h, s + h);
}

}  // namespace oracle
