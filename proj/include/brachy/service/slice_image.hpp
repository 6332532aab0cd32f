#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "brachy/geom/contours.hpp"
#include "brachy/volume/scalar_volume.hpp"

namespace brachy {

/// 8-bit grey image, rows top to bottom.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Window/levelled slice. Axial slices index k and show (i, j); sagittal
/// index i and show (j, k); coronal index j and show (i, k). The second
/// in-plane index grows upward. Window and level default to the volume's
/// value range. Throws InputError for an out-of-range index or a
/// non-positive window.
GrayImage extract_slice(const ScalarVolume& vol, PlaneAxis axis, int index, std::optional<double> window = {},
                        std::optional<double> level = {});

/// World coordinate of a slice along its normal axis (voxel-centre plane).
double slice_offset(const ScalarVolume& vol, PlaneAxis axis, int index);

std::vector<std::uint8_t> encode_png(const GrayImage& image);

}  // namespace brachy
