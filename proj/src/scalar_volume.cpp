#include "brachy/volume/scalar_volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace brachy {

std::string_view to_string(VoxelType t) {
  switch (t) {
    case VoxelType::UInt8:
      return "uint8";
    case VoxelType::Int16:
      return "int16";
    case VoxelType::UInt16:
      return "uint16";
    case VoxelType::Float32:
      return "float";
  }
  return "?";
}

std::size_t voxel_bytes(VoxelType t) {
  switch (t) {
    case VoxelType::UInt8:
      return 1;
    case VoxelType::Int16:
    case VoxelType::UInt16:
      return 2;
    case VoxelType::Float32:
      return 4;
  }
  return 0;
}

double clamp_to_type(double v, VoxelType t) {
  switch (t) {
    case VoxelType::UInt8:
      return std::clamp(std::round(v), 0.0, 255.0);
    case VoxelType::Int16:
      return std::clamp(std::round(v), -32768.0, 32767.0);
    case VoxelType::UInt16:
      return std::clamp(std::round(v), 0.0, 65535.0);
    case VoxelType::Float32:
      return std::clamp(v, double(std::numeric_limits<float>::lowest()), double(std::numeric_limits<float>::max()));
  }
  return v;
}

ScalarVolume::ScalarVolume(Index3 dims, Vec3d spacing, Vec3d origin, Mat3d directions, VoxelType type,
                           std::vector<float> values)
    : dims_(dims), spacing_(spacing), origin_(origin), directions_(directions), type_(type), values_(std::move(values)) {
  for (int d : dims_) {
    if (d < 1) throw InputError("volume dimensions must be positive");
  }
  if (!spacing_.allFinite() || (spacing_.array() <= 0).any()) throw InputError("volume spacing must be positive");
  if (!origin_.allFinite()) throw InputError("volume origin must be finite");
  if (!directions_.allFinite() ||
      (directions_.transpose() * directions_ - Mat3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw InputError("volume direction matrix is not orthonormal");
  }
  const std::size_t n = std::size_t(dims_[0]) * std::size_t(dims_[1]) * std::size_t(dims_[2]);
  if (values_.size() != n) {
    throw InputError("volume holds " + std::to_string(values_.size()) + " values, dims require " + std::to_string(n));
  }
}

ScalarVolume ScalarVolume::zeros(Index3 dims, Vec3d spacing, Vec3d origin, VoxelType type) {
  const std::size_t n = std::size_t(std::max(dims[0], 0)) * std::size_t(std::max(dims[1], 0)) *
                        std::size_t(std::max(dims[2], 0));
  return {dims, spacing, origin, Mat3d::Identity(), type, std::vector<float>(n, 0.0f)};
}

Vec3d ScalarVolume::world_to_index(const Vec3d& p) const {
  return spacing_.cwiseInverse().asDiagonal() * (directions_.transpose() * (p - origin_));
}

std::pair<float, float> ScalarVolume::value_range() const {
  if (values_.empty()) return {0.0f, 0.0f};
  const auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
  return {*lo, *hi};
}

ScalarVolume crop_roi(const ScalarVolume& vol, const RoiBox& box) {
  for (int a = 0; a < 3; ++a) {
    if (box.lower[a] > box.upper[a]) throw InputError("ROI lower corner exceeds upper corner on axis " + std::to_string(a));
    if (box.lower[a] < 0 || box.upper[a] >= vol.dims()[a]) {
      throw InputError("ROI extends outside the volume on axis " + std::to_string(a));
    }
  }
  const Index3 dims{box.upper[0] - box.lower[0] + 1, box.upper[1] - box.lower[1] + 1, box.upper[2] - box.lower[2] + 1};
  std::vector<float> values;
  values.reserve(std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]));
  for (int k = box.lower[2]; k <= box.upper[2]; ++k) {
    for (int j = box.lower[1]; j <= box.upper[1]; ++j) {
      const float* row = &vol.values()[vol.linear_index(box.lower[0], j, k)];
      values.insert(values.end(), row, row + dims[0]);
    }
  }
  return {dims, vol.spacing(), vol.index_to_world(box.lower[0], box.lower[1], box.lower[2]), vol.directions(),
          vol.type(), std::move(values)};
}

PointCloud threshold_points(const ScalarVolume& vol, double threshold) {
  std::vector<Index3> hits;
  const auto& d = vol.dims();
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        if (double(vol.at(i, j, k)) >= threshold) hits.push_back({i, j, k});
      }
    }
  }
  PointCloud out(3, Eigen::Index(hits.size()));
  for (std::size_t n = 0; n < hits.size(); ++n) {
    out.col(Eigen::Index(n)) = vol.index_to_world(hits[n][0], hits[n][1], hits[n][2]);
  }
  return out;
}

std::uint64_t volume_fingerprint(const ScalarVolume& vol) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  mix(vol.dims().data(), sizeof(int) * 3);
  mix(vol.spacing().data(), sizeof(double) * 3);
  mix(vol.origin().data(), sizeof(double) * 3);
  mix(vol.directions().data(), sizeof(double) * 9);
  const int type = int(vol.type());
  mix(&type, sizeof(type));
  mix(vol.values().data(), vol.values().size() * sizeof(float));
  return h;
}

}  // namespace brachy
