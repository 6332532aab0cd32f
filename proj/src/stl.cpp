#include "brachy/geom/stl.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>

namespace brachy {
namespace {

static_assert(std::endian::native == std::endian::little, "STL I/O assumes a little-endian host");

constexpr std::size_t kHeaderBytes = 80;
constexpr std::size_t kRecordBytes = 50;

// Merges points falling within `tol` of an already-seen point. Cells of
// edge `tol` guarantee any match lies in the 27-cell neighbourhood.
class VertexWelder {
 public:
  explicit VertexWelder(double tol) : tol_(tol), inv_(tol > 0 ? 1.0 / tol : 0.0) {}

  int insert(const Vec3d& p) {
    if (tol_ <= 0) return push(p);
    const std::array<std::int64_t, 3> c = cell(p);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (int idx : it->second) {
            if ((points_[std::size_t(idx)] - p).norm() <= tol_) return idx;
          }
        }
      }
    }
    const int idx = push(p);
    cells_[key(c)].push_back(idx);
    return idx;
  }

  const std::vector<Vec3d>& points() const { return points_; }

 private:
  int push(const Vec3d& p) {
    points_.push_back(p);
    return int(points_.size()) - 1;
  }
  std::array<std::int64_t, 3> cell(const Vec3d& p) const {
    return {std::int64_t(std::floor(p.x() * inv_)), std::int64_t(std::floor(p.y() * inv_)),
            std::int64_t(std::floor(p.z() * inv_))};
  }
  static std::uint64_t key(const std::array<std::int64_t, 3>& c) {
    std::uint64_t h = 1469598103934665603ull;
    for (auto v : c) {
      h ^= std::uint64_t(v);
      h *= 1099511628211ull;
    }
    return h;
  }

  double tol_, inv_;
  std::vector<Vec3d> points_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

struct Soup {
  std::vector<std::array<Vec3d, 3>> facets;
  std::vector<Vec3d> normals;
};

StlReadResult index_soup(const Soup& soup, double tol, bool ascii) {
  VertexWelder welder(tol);
  std::vector<std::array<int, 3>> tris;
  tris.reserve(soup.facets.size());
  for (const auto& f : soup.facets) tris.push_back({welder.insert(f[0]), welder.insert(f[1]), welder.insert(f[2])});
  MeshBuilder b;
  for (const auto& p : welder.points()) b.add_vertex(p);
  for (const auto& t : tris) b.add_triangle(t[0], t[1], t[2]);
  TriangleMesh mesh = b.build();
  mesh.normals = PointCloud(3, Eigen::Index(soup.normals.size()));
  for (std::size_t i = 0; i < soup.normals.size(); ++i) mesh.normals->col(Eigen::Index(i)) = soup.normals[i];
  auto valid = validate_mesh(std::move(mesh));
  return {std::move(valid.mesh), ascii, valid.dropped_degenerate};
}

float read_f32(const std::uint8_t* p) {
  float f;
  std::memcpy(&f, p, 4);
  return f;
}

Soup parse_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + 4) throw ParseError("binary STL shorter than 84-byte header", bytes.size());
  std::uint32_t count;
  std::memcpy(&count, bytes.data() + kHeaderBytes, 4);
  const std::size_t expected = kHeaderBytes + 4 + std::size_t(count) * kRecordBytes;
  if (bytes.size() < expected) {
    throw ParseError("truncated binary STL: header declares " + std::to_string(count) + " triangles, need " +
                         std::to_string(expected) + " bytes, have " + std::to_string(bytes.size()),
                     bytes.size());
  }
  if (bytes.size() != expected) {
    throw ParseError("binary STL length mismatch: header declares " + std::to_string(count) +
                         " triangles, trailing bytes present",
                     expected);
  }
  Soup s;
  s.facets.resize(count);
  s.normals.resize(count);
  const std::uint8_t* p = bytes.data() + kHeaderBytes + 4;
  for (std::uint32_t i = 0; i < count; ++i, p += kRecordBytes) {
    Vec3d v[4];
    for (int k = 0; k < 4; ++k) {
      v[k] = Vec3d(read_f32(p + 12 * k), read_f32(p + 12 * k + 4), read_f32(p + 12 * k + 8));
      if (!v[k].allFinite()) {
        throw ParseError("non-finite coordinate in facet " + std::to_string(i), std::size_t(p - bytes.data()) + 12 * k);
      }
    }
    s.normals[i] = v[0];
    s.facets[i] = {v[1], v[2], v[3]};
  }
  return s;
}

class AsciiLexer {
 public:
  explicit AsciiLexer(std::string_view text) : text_(text) {}

  bool next(std::string_view& tok) {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= text_.size()) return false;
    token_line_ = line_;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    tok = text_.substr(start, pos_ - start);
    return true;
  }

  std::string_view rest_of_line() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(std::string_view word) {
    std::string_view tok;
    if (!next(tok)) fail("unexpected end of file, expected '" + std::string(word) + "'");
    if (tok != word) fail("expected '" + std::string(word) + "', found '" + std::string(tok) + "'");
  }

  double number() {
    std::string_view tok;
    if (!next(tok)) fail("unexpected end of file, expected a number");
    double v = 0;
    // from_chars does not accept a leading '+'.
    std::string_view digits = (!tok.empty() && tok.front() == '+') ? tok.substr(1) : tok;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || !std::isfinite(float(v))) {
      fail("malformed number '" + std::string(tok) + "'");
    }
    // STL coordinates are float32 whichever encoding carries them.
    return double(float(v));
  }

  Vec3d vec() {
    const double x = number(), y = number(), z = number();
    return {x, y, z};
  }

  // Errors point at the line of the last token read.
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("ASCII STL: " + msg, token_line_, true); }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t token_line_ = 1;
};

Soup parse_ascii(std::span<const std::uint8_t> bytes) {
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  AsciiLexer lex(text);
  lex.expect("solid");
  lex.rest_of_line();  // optional name
  Soup s;
  std::string_view tok;
  while (true) {
    if (!lex.next(tok)) lex.fail("missing 'endsolid'");
    if (tok == "endsolid") break;
    if (tok != "facet") lex.fail("expected 'facet' or 'endsolid', found '" + std::string(tok) + "'");
    lex.expect("normal");
    const Vec3d n = lex.vec();
    lex.expect("outer");
    lex.expect("loop");
    std::array<Vec3d, 3> f;
    for (auto& v : f) {
      lex.expect("vertex");
      v = lex.vec();
    }
    lex.expect("endloop");
    lex.expect("endfacet");
    s.facets.push_back(f);
    s.normals.push_back(n);
  }
  return s;
}

bool looks_ascii(std::span<const std::uint8_t> bytes) {
  std::size_t i = 0;
  while (i < bytes.size() && std::isspace(bytes[i])) ++i;
  if (bytes.size() - i < 5 || std::memcmp(bytes.data() + i, "solid", 5) != 0) return false;
  // Binary files may also begin with "solid"; trust the declared count when
  // it matches the file length exactly.
  if (bytes.size() >= kHeaderBytes + 4) {
    std::uint32_t count;
    std::memcpy(&count, bytes.data() + kHeaderBytes, 4);
    if (kHeaderBytes + 4 + std::size_t(count) * kRecordBytes == bytes.size()) return false;
  }
  return true;
}

Vec3d facet_normal(const Vec3d& a, const Vec3d& b, const Vec3d& c) {
  const Vec3d n = (b - a).cross(c - a);
  const double len = n.norm();
  return len > 0 ? Vec3d(n / len) : Vec3d::Zero();
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  const float f = float(v);
  std::uint8_t buf[4];
  std::memcpy(buf, &f, 4);
  out.insert(out.end(), buf, buf + 4);
}

}  // namespace

StlReadResult read_stl(std::span<const std::uint8_t> bytes, double weld_tolerance) {
  const bool ascii = looks_ascii(bytes);
  return index_soup(ascii ? parse_ascii(bytes) : parse_binary(bytes), weld_tolerance, ascii);
}

StlReadResult read_stl_file(const std::filesystem::path& path, double weld_tolerance) {
  const auto bytes = read_file_bytes(path);
  return read_stl(bytes, weld_tolerance);
}

std::vector<std::uint8_t> write_stl_binary(const TriangleMesh& mesh) {
  std::vector<std::uint8_t> out(kHeaderBytes, 0);
  out.reserve(kHeaderBytes + 4 + std::size_t(mesh.triangle_count()) * kRecordBytes);
  const auto count = std::uint32_t(mesh.triangle_count());
  std::uint8_t buf[4];
  std::memcpy(buf, &count, 4);
  out.insert(out.end(), buf, buf + 4);
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3d a = mesh.corner(t, 0), b = mesh.corner(t, 1), c = mesh.corner(t, 2);
    for (const Vec3d& v : {facet_normal(a, b, c), a, b, c}) {
      put_f32(out, v.x());
      put_f32(out, v.y());
      put_f32(out, v.z());
    }
    out.push_back(0);
    out.push_back(0);
  }
  return out;
}

std::string write_stl_ascii(const TriangleMesh& mesh, const std::string& name) {
  std::ostringstream os;
  os.precision(9);  // float32 round-trip
  os << "solid " << name << "\n";
  for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
    const Vec3d a = mesh.corner(t, 0), b = mesh.corner(t, 1), c = mesh.corner(t, 2);
    const Vec3d n = facet_normal(a, b, c);
    os << "  facet normal " << float(n.x()) << ' ' << float(n.y()) << ' ' << float(n.z()) << "\n    outer loop\n";
    for (const Vec3d& v : {a, b, c}) {
      os << "      vertex " << float(v.x()) << ' ' << float(v.y()) << ' ' << float(v.z()) << "\n";
    }
    os << "    endloop\n  endfacet\n";
  }
  os << "endsolid " << name << "\n";
  return os.str();
}

void write_stl_file(const std::filesystem::path& path, const TriangleMesh& mesh) {
  write_file_bytes(path, write_stl_binary(mesh));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

}  // namespace brachy
