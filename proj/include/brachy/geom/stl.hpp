#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "brachy/geom/mesh.hpp"

namespace brachy {

struct StlReadResult {
  TriangleMesh mesh;
  bool was_ascii = false;
  std::size_t dropped_degenerate = 0;
};

/// Parses binary or ASCII STL. Facet vertices closer than `weld_tolerance`
/// are merged into one indexed vertex; zero-area facets are dropped and
/// counted. Throws ParseError on truncated or malformed input.
StlReadResult read_stl(std::span<const std::uint8_t> bytes, double weld_tolerance = 1e-6);
StlReadResult read_stl_file(const std::filesystem::path& path, double weld_tolerance = 1e-6);

std::vector<std::uint8_t> write_stl_binary(const TriangleMesh& mesh);
std::string write_stl_ascii(const TriangleMesh& mesh, const std::string& name = "mesh");
void write_stl_file(const std::filesystem::path& path, const TriangleMesh& mesh);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace brachy
