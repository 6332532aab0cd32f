#include "brachy/service/slice_image.hpp"

#include <algorithm>
#include <cmath>

#include <zlib.h>

#include "brachy/error.hpp"

namespace brachy {

namespace {

// Volume index axis shown along image x, along image y, and the sliced axis.
std::array<int, 3> slice_axes(PlaneAxis axis) {
  switch (axis) {
    case PlaneAxis::Axial:
      return {0, 1, 2};
    case PlaneAxis::Sagittal:
      return {1, 2, 0};
    case PlaneAxis::Coronal:
      return {0, 2, 1};
  }
  return {0, 1, 2};
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(std::uint8_t(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, std::uint32_t(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32(out, std::uint32_t(crc32(0L, out.data() + start, uInt(out.size() - start))));
}

}  // namespace

double slice_offset(const ScalarVolume& vol, PlaneAxis axis, int index) {
  const auto ax = slice_axes(axis);
  Vec3d ijk = Vec3d::Zero();
  ijk[ax[2]] = index;
  return vol.index_to_world(ijk)[normal_axis(axis)];
}

GrayImage extract_slice(const ScalarVolume& vol, PlaneAxis axis, int index, std::optional<double> window,
                        std::optional<double> level) {
  const auto ax = slice_axes(axis);
  const auto& d = vol.dims();
  if (index < 0 || index >= d[std::size_t(ax[2])]) {
    throw InputError("slice index " + std::to_string(index) + " outside [0, " +
                     std::to_string(d[std::size_t(ax[2])] - 1) + "]");
  }
  const auto range = vol.value_range();
  const double w = window.value_or(std::max(1e-9, double(range.second) - double(range.first)));
  const double l = level.value_or(0.5 * (double(range.first) + double(range.second)));
  if (!(w > 0)) throw InputError("window must be positive");

  GrayImage img;
  img.width = d[std::size_t(ax[0])];
  img.height = d[std::size_t(ax[1])];
  img.pixels.resize(std::size_t(img.width) * std::size_t(img.height));
  const double lo = l - 0.5 * w;
  for (int row = 0; row < img.height; ++row) {
    for (int col = 0; col < img.width; ++col) {
      std::array<int, 3> ijk{};
      ijk[std::size_t(ax[0])] = col;
      ijk[std::size_t(ax[1])] = img.height - 1 - row;
      ijk[std::size_t(ax[2])] = index;
      const double t = std::clamp((double(vol.at(ijk[0], ijk[1], ijk[2])) - lo) / w, 0.0, 1.0);
      img.pixels[std::size_t(row) * std::size_t(img.width) + std::size_t(col)] = std::uint8_t(std::lround(255 * t));
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const GrayImage& image) {
  std::vector<std::uint8_t> raw;
  raw.reserve(std::size_t(image.height) * (std::size_t(image.width) + 1));
  for (int row = 0; row < image.height; ++row) {
    raw.push_back(0);  // filter: none
    const auto* p = image.pixels.data() + std::size_t(row) * std::size_t(image.width);
    raw.insert(raw.end(), p, p + image.width);
  }
  uLongf packed_size = compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), uLong(raw.size()), 6) != Z_OK) {
    throw Error("internal", "zlib compression failed");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, std::uint32_t(image.width));
  put_u32(ihdr, std::uint32_t(image.height));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit greyscale
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace brachy
