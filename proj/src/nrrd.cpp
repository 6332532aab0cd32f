#include "brachy/volume/nrrd.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "brachy/geom/stl.hpp"

namespace brachy {
namespace {

static_assert(std::endian::native == std::endian::little, "NRRD I/O assumes a little-endian host");

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

VoxelType parse_type(const std::string& raw) {
  static const std::map<std::string, VoxelType> names = {
      {"uchar", VoxelType::UInt8},          {"unsigned char", VoxelType::UInt8},   {"uint8", VoxelType::UInt8},
      {"uint8_t", VoxelType::UInt8},        {"short", VoxelType::Int16},           {"short int", VoxelType::Int16},
      {"signed short", VoxelType::Int16},   {"signed short int", VoxelType::Int16}, {"int16", VoxelType::Int16},
      {"int16_t", VoxelType::Int16},        {"ushort", VoxelType::UInt16},         {"unsigned short", VoxelType::UInt16},
      {"unsigned short int", VoxelType::UInt16}, {"uint16", VoxelType::UInt16},    {"uint16_t", VoxelType::UInt16},
      {"float", VoxelType::Float32}};
  auto it = names.find(lower(raw));
  if (it == names.end()) throw UnsupportedFormat("type", "voxel type '" + raw + "' not supported");
  return it->second;
}

std::vector<double> parse_numbers(const std::string& s, std::size_t line, const char* field) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    while (pos < s.size() && (std::isspace(static_cast<unsigned char>(s[pos])) || s[pos] == ',' || s[pos] == '(' || s[pos] == ')')) ++pos;
    if (pos >= s.size()) break;
    double v;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), v);
    if (ec != std::errc()) throw ParseError(std::string("malformed number in '") + field + "'", line, true);
    out.push_back(v);
    pos = std::size_t(ptr - s.data());
  }
  return out;
}

std::vector<Vec3d> parse_vectors(const std::string& s, std::size_t line, const char* field) {
  std::vector<Vec3d> out;
  std::size_t pos = 0;
  while ((pos = s.find('(', pos)) != std::string::npos) {
    const auto end = s.find(')', pos);
    if (end == std::string::npos) throw ParseError(std::string("unterminated vector in '") + field + "'", line, true);
    const auto nums = parse_numbers(s.substr(pos + 1, end - pos - 1), line, field);
    if (nums.size() != 3) throw UnsupportedFormat(field, "expected 3-component vectors");
    out.emplace_back(nums[0], nums[1], nums[2]);
    pos = end + 1;
  }
  if (out.empty() && trim(s) == "none") throw UnsupportedFormat(field, "non-spatial axes are not supported");
  return out;
}

// Header fields that carry no information needed here.
const std::set<std::string> kIgnoredFields = {"content", "kinds", "space units", "labels", "units", "comment",
                                              "space dimension", "measurement frame", "centers", "centerings",
                                              "thicknesses", "old min", "oldmin", "old max", "oldmax", "min", "max"};

}  // namespace

ScalarVolume read_nrrd(std::span<const std::uint8_t> bytes) {
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (text.size() < 8 || text.substr(0, 7) != "NRRD000") throw ParseError("missing NRRD magic", 0);
  const char version = text[7];
  if (version < '1' || version > '5') throw UnsupportedFormat("magic", "unknown NRRD version");

  std::size_t pos = text.find('\n');
  if (pos == std::string_view::npos) throw ParseError("header has no line terminator", text.size());
  ++pos;
  std::size_t line_no = 1;
  std::map<std::string, std::pair<std::string, std::size_t>> fields;
  bool blank_found = false;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) throw ParseError("header not terminated by a blank line", text.size());
    ++line_no;
    const std::string line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) {
      blank_found = true;
      break;
    }
    if (line[0] == '#') continue;
    if (line.find(":=") != std::string::npos) continue;  // key/value pairs
    const auto colon = line.find(": ");
    if (colon == std::string::npos) throw ParseError("malformed header line '" + line + "'", line_no, true);
    fields[lower(trim(line.substr(0, colon)))] = {trim(line.substr(colon + 2)), line_no};
  }
  if (!blank_found) throw ParseError("header not terminated by a blank line", text.size());

  for (const auto& [name, value] : fields) {
    static const std::set<std::string> known = {"dimension", "type", "sizes", "encoding", "endian",
                                                "space directions", "space origin", "space", "byte skip",
                                                "line skip", "spacings", "data file", "datafile"};
    if (!known.count(name) && !kIgnoredFields.count(name)) throw UnsupportedFormat(name, "field not supported");
  }
  auto require = [&](const char* name) -> const std::pair<std::string, std::size_t>& {
    auto it = fields.find(name);
    if (it == fields.end()) throw UnsupportedFormat(name, "required field missing");
    return it->second;
  };

  if (fields.count("data file") || fields.count("datafile")) throw UnsupportedFormat("data file", "detached data not supported");
  if (trim(require("dimension").first) != "3") throw UnsupportedFormat("dimension", "only 3-D volumes are supported");
  const VoxelType type = parse_type(require("type").first);
  if (lower(require("encoding").first) != "raw") throw UnsupportedFormat("encoding", "only raw encoding is supported");
  if (voxel_bytes(type) > 1) {
    auto it = fields.find("endian");
    if (it == fields.end()) throw UnsupportedFormat("endian", "required for multi-byte types");
    if (lower(it->second.first) != "little") throw UnsupportedFormat("endian", "only little-endian is supported");
  }
  for (const char* skip : {"byte skip", "line skip"}) {
    auto it = fields.find(skip);
    if (it != fields.end() && trim(it->second.first) != "0") throw UnsupportedFormat(skip, "must be 0");
  }

  const auto& sizes_f = require("sizes");
  const auto sizes = parse_numbers(sizes_f.first, sizes_f.second, "sizes");
  if (sizes.size() != 3) throw ParseError("sizes must list 3 values", sizes_f.second, true);
  Index3 dims{};
  for (int a = 0; a < 3; ++a) {
    if (sizes[std::size_t(a)] < 1 || sizes[std::size_t(a)] != std::floor(sizes[std::size_t(a)])) {
      throw ParseError("sizes must be positive integers", sizes_f.second, true);
    }
    dims[std::size_t(a)] = int(sizes[std::size_t(a)]);
  }

  bool lps = false;
  if (auto it = fields.find("space"); it != fields.end()) {
    const std::string sp = lower(it->second.first);
    if (sp == "right-anterior-superior" || sp == "ras") {
      lps = false;
    } else if (sp == "left-posterior-superior" || sp == "lps") {
      lps = true;
    } else {
      throw UnsupportedFormat("space", "'" + it->second.first + "' not supported");
    }
  } else {
    throw UnsupportedFormat("space", "required field missing");
  }
  const auto& dir_f = require("space directions");
  const auto dirs = parse_vectors(dir_f.first, dir_f.second, "space directions");
  if (dirs.size() != 3) throw UnsupportedFormat("space directions", "expected 3 vectors");
  const auto& org_f = require("space origin");
  const auto org = parse_vectors(org_f.first, org_f.second, "space origin");
  if (org.size() != 1) throw UnsupportedFormat("space origin", "expected one vector");

  Vec3d spacing;
  Mat3d directions;
  for (int a = 0; a < 3; ++a) {
    spacing[a] = dirs[std::size_t(a)].norm();
    if (!(spacing[a] > 0)) throw UnsupportedFormat("space directions", "zero-length axis");
    directions.col(a) = dirs[std::size_t(a)] / spacing[a];
  }
  Vec3d origin = org[0];
  if (lps) {
    const Vec3d flip(-1, -1, 1);
    directions = flip.asDiagonal() * directions;
    origin = origin.cwiseProduct(flip);
  }

  const std::size_t count = std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
  const std::size_t need = count * voxel_bytes(type);
  const std::size_t have = bytes.size() - pos;
  if (have != need) {
    throw ParseError("payload holds " + std::to_string(have) + " bytes, header requires " + std::to_string(need), pos);
  }
  std::vector<float> values(count);
  const std::uint8_t* p = bytes.data() + pos;
  for (std::size_t i = 0; i < count; ++i) {
    switch (type) {
      case VoxelType::UInt8:
        values[i] = float(p[i]);
        break;
      case VoxelType::Int16: {
        std::int16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        values[i] = float(v);
        break;
      }
      case VoxelType::UInt16: {
        std::uint16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        values[i] = float(v);
        break;
      }
      case VoxelType::Float32:
        std::memcpy(&values[i], p + 4 * i, 4);
        break;
    }
  }
  try {
    return {dims, spacing, origin, directions, type, std::move(values)};
  } catch (const InputError& e) {
    throw UnsupportedFormat("space directions", e.what());
  }
}

ScalarVolume read_nrrd_file(const std::filesystem::path& path) { return read_nrrd(read_file_bytes(path)); }

std::vector<std::uint8_t> write_nrrd(const ScalarVolume& vol) {
  std::ostringstream h;
  h.precision(17);
  h << "NRRD0004\n# written by brachyplan\n";
  h << "type: " << to_string(vol.type()) << "\n";
  h << "dimension: 3\nspace: right-anterior-superior\n";
  h << "sizes: " << vol.dims()[0] << ' ' << vol.dims()[1] << ' ' << vol.dims()[2] << "\n";
  h << "space directions:";
  const Mat3d axes = vol.index_to_world_matrix();
  for (int a = 0; a < 3; ++a) h << " (" << axes(0, a) << ',' << axes(1, a) << ',' << axes(2, a) << ')';
  h << "\nkinds: domain domain domain\n";
  if (voxel_bytes(vol.type()) > 1) h << "endian: little\n";
  h << "encoding: raw\n";
  h << "space origin: (" << vol.origin().x() << ',' << vol.origin().y() << ',' << vol.origin().z() << ")\n\n";
  const std::string header = h.str();

  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t bpv = voxel_bytes(vol.type());
  const std::size_t base = out.size();
  out.resize(base + vol.voxel_count() * bpv);
  std::uint8_t* p = out.data() + base;
  for (std::size_t i = 0; i < vol.voxel_count(); ++i) {
    const float v = vol.values()[i];
    switch (vol.type()) {
      case VoxelType::UInt8:
        p[i] = std::uint8_t(clamp_to_type(v, vol.type()));
        break;
      case VoxelType::Int16: {
        const auto s = std::int16_t(clamp_to_type(v, vol.type()));
        std::memcpy(p + 2 * i, &s, 2);
        break;
      }
      case VoxelType::UInt16: {
        const auto s = std::uint16_t(clamp_to_type(v, vol.type()));
        std::memcpy(p + 2 * i, &s, 2);
        break;
      }
      case VoxelType::Float32:
        std::memcpy(p + 4 * i, &v, 4);
        break;
    }
  }
  return out;
}

void write_nrrd_file(const std::filesystem::path& path, const ScalarVolume& vol) {
  write_file_bytes(path, write_nrrd(vol));
}

}  // namespace brachy
