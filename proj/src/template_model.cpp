#include "brachy/applicator/template_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "brachy/geom/stl.hpp"
#include "brachy/geom/triangulate.hpp"

namespace brachy {
namespace {

using V2 = Eigen::Vector2d;

// Counter-clockwise N-gon.
Polygon2 ngon(const V2& c, double r, int sides) {
  Polygon2 p;
  for (int i = 0; i < sides; ++i) {
    const double a = 2 * std::numbers::pi * i / sides;
    p.emplace_back(c.x() + r * std::cos(a), c.y() + r * std::sin(a));
  }
  return p;
}

// Sorted, de-duplicated cell boundaries along one axis: lattice cell edges
// halfway between holes, clamped to the plate, plus the plate edges.
std::vector<double> breakpoints(int count, double pitch, double plate_extent) {
  const double half = plate_extent / 2;
  std::vector<double> b{-half, half};
  for (int i = 0; i <= count; ++i) {
    const double x = (i - count / 2.0) * pitch;
    if (x > -half && x < half) b.push_back(x);
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

struct Region {
  int x0, x1, y0, y1;  // breakpoint index range
  std::vector<Polygon2> holes;
};

class PlateBuilder {
 public:
  PlateBuilder(double z_top, double z_bottom) : top_(z_top), bottom_(z_bottom) {}

  int vertex(const V2& p, bool top) {
    auto& map = top ? top_ids_ : bottom_ids_;
    const auto key = std::make_pair(p.x(), p.y());
    auto it = map.find(key);
    if (it != map.end()) return it->second;
    const int id = b_.add_vertex(Vec3d(p.x(), p.y(), top ? top_ : bottom_));
    map.emplace(key, id);
    return id;
  }

  void face(const Polygon2& outer, const std::vector<Polygon2>& holes) {
    std::vector<V2> all(outer);
    std::vector<Polygon2> cw_holes;
    for (const auto& h : holes) {
      Polygon2 r(h.rbegin(), h.rend());
      all.insert(all.end(), r.begin(), r.end());
      cw_holes.push_back(std::move(r));
    }
    for (const auto& t : triangulate_polygon(outer, cw_holes)) {
      const V2 &a = all[std::size_t(t[0])], &b = all[std::size_t(t[1])], &c = all[std::size_t(t[2])];
      b_.add_triangle(vertex(a, true), vertex(b, true), vertex(c, true));
      b_.add_triangle(vertex(a, false), vertex(c, false), vertex(b, false));
    }
  }

  // Wall between consecutive points of a loop. For a CCW loop the outward
  // normal points to the right of travel; `inward` flips it (bores).
  void wall(const Polygon2& loop, bool inward) {
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
      const V2& p = loop[i];
      const V2& q = loop[(i + 1) % n];
      const int pt = vertex(p, true), qt = vertex(q, true), pb = vertex(p, false), qb = vertex(q, false);
      if (inward) {
        b_.add_quad(pb, pt, qt, qb);
      } else {
        b_.add_quad(pb, qb, qt, pt);
      }
    }
  }

  TriangleMesh build() const { return b_.build(); }

 private:
  double top_, bottom_;
  MeshBuilder b_;
  std::map<std::pair<double, double>, int> top_ids_, bottom_ids_;
};

}  // namespace

TriangleMesh parametric_template_mesh(const TemplateConfig& config) {
  config.validate();
  const auto bx = breakpoints(config.cols, config.pitch, config.plate_width);
  const auto by = breakpoints(config.rows, config.pitch, config.plate_height);
  const int nx = int(bx.size()) - 1, ny = int(by.size()) - 1;

  auto cell_of = [](const std::vector<double>& b, double v) {
    return int(std::upper_bound(b.begin(), b.end(), v) - b.begin()) - 1;
  };

  // Cells overlapped by the obturator opening merge into one region.
  std::vector<int> region_of(std::size_t(nx * ny), -1);
  std::vector<Region> regions;
  const double ro = config.obturator_hole_radius;
  if (ro > 0) {
    Region block{cell_of(bx, -ro), cell_of(bx, ro) + 1, cell_of(by, -ro), cell_of(by, ro) + 1, {}};
    block.x0 = std::max(block.x0, 0);
    block.y0 = std::max(block.y0, 0);
    block.x1 = std::min(block.x1, nx);
    block.y1 = std::min(block.y1, ny);
    if (ro >= std::min({-bx[std::size_t(block.x0)], bx[std::size_t(block.x1)], -by[std::size_t(block.y0)],
                        by[std::size_t(block.y1)]})) {
      throw InputError("obturator opening reaches the plate edge");
    }
    block.holes.push_back(ngon(V2::Zero(), ro, config.bore_sides));
    for (int ix = block.x0; ix < block.x1; ++ix) {
      for (int iy = block.y0; iy < block.y1; ++iy) region_of[std::size_t(iy * nx + ix)] = 0;
    }
    regions.push_back(std::move(block));
  }
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      if (region_of[std::size_t(iy * nx + ix)] >= 0) continue;
      region_of[std::size_t(iy * nx + ix)] = int(regions.size());
      regions.push_back({ix, ix + 1, iy, iy + 1, {}});
    }
  }
  std::vector<Polygon2> bores;
  for (const auto& h : hole_grid(config)) {
    const V2 c(h.entry.x(), h.entry.y());
    const int ix = cell_of(bx, c.x()), iy = cell_of(by, c.y());
    Polygon2 poly = ngon(c, config.hole_radius, config.bore_sides);
    regions[std::size_t(region_of[std::size_t(iy * nx + ix)])].holes.push_back(poly);
    bores.push_back(std::move(poly));
  }
  if (ro > 0) bores.push_back(ngon(V2::Zero(), ro, config.bore_sides));

  PlateBuilder plate(0.0, -config.plate_thickness);
  for (const auto& r : regions) {
    // CCW boundary through every breakpoint on the rectangle's edges so
    // neighbouring regions share vertices.
    Polygon2 outer;
    for (int i = r.x0; i < r.x1; ++i) outer.emplace_back(bx[std::size_t(i)], by[std::size_t(r.y0)]);
    for (int i = r.y0; i < r.y1; ++i) outer.emplace_back(bx[std::size_t(r.x1)], by[std::size_t(i)]);
    for (int i = r.x1; i > r.x0; --i) outer.emplace_back(bx[std::size_t(i)], by[std::size_t(r.y1)]);
    for (int i = r.y1; i > r.y0; --i) outer.emplace_back(bx[std::size_t(r.x0)], by[std::size_t(i)]);
    plate.face(outer, r.holes);
  }
  Polygon2 perimeter;
  for (int i = 0; i < nx; ++i) perimeter.emplace_back(bx[std::size_t(i)], by.front());
  for (int i = 0; i < ny; ++i) perimeter.emplace_back(bx.back(), by[std::size_t(i)]);
  for (int i = nx; i > 0; --i) perimeter.emplace_back(bx[std::size_t(i)], by.back());
  for (int i = ny; i > 0; --i) perimeter.emplace_back(bx.front(), by[std::size_t(i)]);
  plate.wall(perimeter, false);
  for (const auto& b : bores) plate.wall(b, true);
  return plate.build();
}

TriangleMesh template_mesh(const TemplateConfig& config) {
  if (config.template_stl) return read_stl_file(*config.template_stl).mesh;
  return parametric_template_mesh(config);
}

TriangleMesh parametric_obturator_mesh(const TemplateConfig& config) {
  return prism_mesh(Vec3d(0, 0, -config.obturator_length), Vec3d(0, 0, config.obturator_length),
                    config.obturator_radius, config.bore_sides);
}

TriangleMesh obturator_mesh(const TemplateConfig& config) {
  if (config.obturator_stl) return read_stl_file(*config.obturator_stl).mesh;
  return parametric_obturator_mesh(config);
}

PointCloud superior_surface_points(const TemplateConfig& config, const SurfaceSampling& sampling) {
  if (sampling.rim_points < 0 || !(sampling.axis_step >= 0)) throw InputError("sampling density must be non-negative");
  const auto holes = hole_grid(config);
  std::vector<Vec3d> pts;
  for (const auto& h : holes) {
    pts.push_back(h.entry);
    for (int i = 0; i < sampling.rim_points; ++i) {
      const double a = 2 * std::numbers::pi * i / sampling.rim_points;
      pts.push_back(h.entry + config.hole_radius * Vec3d(std::cos(a), std::sin(a), 0));
    }
    if (sampling.axis_step > 0) {
      const int steps = int(std::floor(config.plate_thickness / sampling.axis_step + 1e-9));
      for (int s = 1; s <= steps; ++s) pts.push_back(h.entry + h.direction * (s * sampling.axis_step));
    }
  }
  PointCloud out(3, Eigen::Index(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) out.col(Eigen::Index(i)) = pts[i];
  return out;
}

}  // namespace brachy
