#include "brachy/geom/triangulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "brachy/error.hpp"

namespace brachy {
namespace {

using V2 = Eigen::Vector2d;

double cross(const V2& a, const V2& b, const V2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

bool inside_or_on(const V2& p, const V2& a, const V2& b, const V2& c, double eps) {
  return cross(a, b, p) >= -eps && cross(b, c, p) >= -eps && cross(c, a, p) >= -eps;
}

}  // namespace

double signed_area(const Polygon2& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const V2& p = poly[i];
    const V2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

std::vector<std::array<int, 3>> triangulate_polygon(const Polygon2& outer, const std::vector<Polygon2>& holes) {
  std::vector<V2> pts(outer);
  std::vector<int> ring(outer.size());
  std::iota(ring.begin(), ring.end(), 0);

  double extent = 1.0;
  for (const auto& p : outer) extent = std::max(extent, p.cwiseAbs().maxCoeff());
  const double eps = 1e-12 * extent * extent;

  std::vector<std::vector<int>> hole_ids;
  for (const auto& h : holes) {
    std::vector<int> ids;
    for (const auto& p : h) {
      ids.push_back(int(pts.size()));
      pts.push_back(p);
    }
    hole_ids.push_back(std::move(ids));
  }
  // Bridge holes in decreasing order of their rightmost x.
  std::vector<std::size_t> by_x(holes.size());
  std::iota(by_x.begin(), by_x.end(), 0);
  auto max_x = [&](std::size_t h) {
    double m = -std::numeric_limits<double>::infinity();
    for (int id : hole_ids[h]) m = std::max(m, pts[std::size_t(id)].x());
    return m;
  };
  std::sort(by_x.begin(), by_x.end(), [&](std::size_t a, std::size_t b) { return max_x(a) > max_x(b); });

  for (std::size_t h : by_x) {
    const auto& ids = hole_ids[h];
    std::size_t mi = 0;
    for (std::size_t i = 1; i < ids.size(); ++i) {
      const V2& a = pts[std::size_t(ids[i])];
      const V2& b = pts[std::size_t(ids[mi])];
      if (a.x() > b.x() || (a.x() == b.x() && a.y() < b.y())) mi = i;
    }
    const V2 m = pts[std::size_t(ids[mi])];

    // Nearest crossing of the +x ray from m with the current ring.
    double best_t = std::numeric_limits<double>::infinity();
    std::size_t best_edge = 0;
    for (std::size_t e = 0; e < ring.size(); ++e) {
      const V2& a = pts[std::size_t(ring[e])];
      const V2& b = pts[std::size_t(ring[(e + 1) % ring.size()])];
      if ((a.y() > m.y()) == (b.y() > m.y()) && a.y() != m.y() && b.y() != m.y()) continue;
      if (a.y() == b.y()) {
        if (a.y() != m.y()) continue;
        const double x = std::min(a.x(), b.x());
        if (x >= m.x() && x - m.x() < best_t) {
          best_t = x - m.x();
          best_edge = e;
        }
        continue;
      }
      const double s = (m.y() - a.y()) / (b.y() - a.y());
      if (s < 0 || s > 1) continue;
      const double x = a.x() + s * (b.x() - a.x());
      if (x >= m.x() && x - m.x() < best_t) {
        best_t = x - m.x();
        best_edge = e;
      }
    }
    if (!std::isfinite(best_t)) throw InputError("polygon hole is not inside the outer boundary");
    const V2 hit(m.x() + best_t, m.y());
    const std::size_t ea = best_edge, eb = (best_edge + 1) % ring.size();
    std::size_t p = pts[std::size_t(ring[ea])].x() > pts[std::size_t(ring[eb])].x() ? ea : eb;
    if ((pts[std::size_t(ring[ea])] - hit).norm() == 0) p = ea;
    if ((pts[std::size_t(ring[eb])] - hit).norm() == 0) p = eb;

    // A ring vertex inside triangle (m, hit, P) would block the bridge; take
    // the one making the smallest angle with the ray instead.
    const V2 pv = pts[std::size_t(ring[p])];
    if ((pv - hit).norm() > 0) {
      double best_angle = std::numeric_limits<double>::infinity(), best_dist = best_angle;
      const bool ccw = cross(m, hit, pv) > 0;
      for (std::size_t r = 0; r < ring.size(); ++r) {
        if (r == p) continue;
        const V2& q = pts[std::size_t(ring[r])];
        const bool in = ccw ? inside_or_on(q, m, hit, pv, eps) : inside_or_on(q, m, pv, hit, eps);
        if (!in || q.x() < m.x()) continue;
        const V2 d = q - m;
        const double angle = std::abs(std::atan2(d.y(), d.x()));
        if (angle < best_angle || (angle == best_angle && d.norm() < best_dist)) {
          best_angle = angle;
          best_dist = d.norm();
          p = r;
        }
      }
    }

    std::vector<int> merged;
    merged.reserve(ring.size() + ids.size() + 2);
    merged.insert(merged.end(), ring.begin(), ring.begin() + std::ptrdiff_t(p) + 1);
    for (std::size_t i = 0; i <= ids.size(); ++i) merged.push_back(ids[(mi + i) % ids.size()]);
    merged.push_back(ring[p]);
    merged.insert(merged.end(), ring.begin() + std::ptrdiff_t(p) + 1, ring.end());
    ring = std::move(merged);
  }

  std::vector<std::array<int, 3>> tris;
  tris.reserve(ring.size());
  while (ring.size() > 3) {
    bool clipped = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
      const int ia = ring[(i + n - 1) % n], ib = ring[i], ic = ring[(i + 1) % n];
      const V2 &a = pts[std::size_t(ia)], &b = pts[std::size_t(ib)], &c = pts[std::size_t(ic)];
      if (cross(a, b, c) <= eps) continue;  // reflex or collinear
      bool blocked = false;
      for (std::size_t j = 0; j < n && !blocked; ++j) {
        const int id = ring[j];
        if (id == ia || id == ib || id == ic) continue;
        const V2& q = pts[std::size_t(id)];
        if (q == a || q == b || q == c) continue;  // bridge duplicates
        blocked = inside_or_on(q, a, b, c, eps);
      }
      if (blocked) continue;
      tris.push_back({ia, ib, ic});
      ring.erase(ring.begin() + std::ptrdiff_t(i));
      clipped = true;
      break;
    }
    if (!clipped) throw InputError("polygon triangulation failed (self-intersecting input?)");
  }
  if (cross(pts[std::size_t(ring[0])], pts[std::size_t(ring[1])], pts[std::size_t(ring[2])]) > eps) {
    tris.push_back({ring[0], ring[1], ring[2]});
  }
  return tris;
}

}  // namespace brachy
