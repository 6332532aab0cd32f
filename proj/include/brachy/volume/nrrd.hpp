#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "brachy/volume/scalar_volume.hpp"

namespace brachy {

/// Reads the attached-data, raw-encoded, little-endian NRRD subset with
/// 3-D spatial metadata. LPS spaces are converted to RAS on read.
/// Throws UnsupportedFormat (naming the field) or ParseError.
ScalarVolume read_nrrd(std::span<const std::uint8_t> bytes);
ScalarVolume read_nrrd_file(const std::filesystem::path& path);

/// Writes NRRD0004 in RAS with the volume's voxel type.
std::vector<std::uint8_t> write_nrrd(const ScalarVolume& vol);
void write_nrrd_file(const std::filesystem::path& path, const ScalarVolume& vol);

}  // namespace brachy
