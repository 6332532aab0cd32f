#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "brachy/geom/transform.hpp"

namespace brachy {

enum class VoxelType { UInt8, Int16, UInt16, Float32 };

std::string_view to_string(VoxelType t);
std::size_t voxel_bytes(VoxelType t);
/// Clamp and (for integer types) round a value into the type's range.
double clamp_to_type(double v, VoxelType t);

using Index3 = std::array<int, 3>;

/// Regular 3-D scalar grid. Voxel (i, j, k) sits at world point
/// origin + directions * diag(spacing) * (i, j, k); the origin is the
/// centre of voxel (0, 0, 0). Values are stored x-fastest.
class ScalarVolume {
 public:
  ScalarVolume() = default;
  /// Throws InputError when dims < 1, spacing <= 0 or directions are not
  /// orthonormal within 1e-6.
  ScalarVolume(Index3 dims, Vec3d spacing, Vec3d origin, Mat3d directions, VoxelType type,
               std::vector<float> values);
  /// Zero-filled volume with identity directions.
  static ScalarVolume zeros(Index3 dims, Vec3d spacing, Vec3d origin, VoxelType type = VoxelType::Float32);

  const Index3& dims() const { return dims_; }
  const Vec3d& spacing() const { return spacing_; }
  const Vec3d& origin() const { return origin_; }
  const Mat3d& directions() const { return directions_; }  // unit axis vectors as columns
  VoxelType type() const { return type_; }
  const std::vector<float>& values() const { return values_; }
  std::vector<float>& mutable_values() { return values_; }

  std::size_t voxel_count() const { return values_.size(); }
  std::size_t linear_index(int i, int j, int k) const {
    return std::size_t(i) + std::size_t(dims_[0]) * (std::size_t(j) + std::size_t(dims_[1]) * std::size_t(k));
  }
  float at(int i, int j, int k) const { return values_[linear_index(i, j, k)]; }
  float& at(int i, int j, int k) { return values_[linear_index(i, j, k)]; }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
  }

  /// Maps continuous index coordinates to world millimetres.
  Mat3d index_to_world_matrix() const { return directions_ * spacing_.asDiagonal(); }
  Vec3d index_to_world(const Vec3d& ijk) const { return origin_ + index_to_world_matrix() * ijk; }
  Vec3d index_to_world(int i, int j, int k) const { return index_to_world(Vec3d(i, j, k)); }
  Vec3d world_to_index(const Vec3d& p) const;

  std::pair<float, float> value_range() const;

 private:
  Index3 dims_{0, 0, 0};
  Vec3d spacing_ = Vec3d::Ones();
  Vec3d origin_ = Vec3d::Zero();
  Mat3d directions_ = Mat3d::Identity();
  VoxelType type_ = VoxelType::Float32;
  std::vector<float> values_;
};

/// Inclusive index-space box.
struct RoiBox {
  Index3 lower{0, 0, 0};
  Index3 upper{0, 0, 0};

  static RoiBox full(const ScalarVolume& vol) {
    return {{0, 0, 0}, {vol.dims()[0] - 1, vol.dims()[1] - 1, vol.dims()[2] - 1}};
  }
  bool contains(int i, int j, int k) const {
    return i >= lower[0] && i <= upper[0] && j >= lower[1] && j <= upper[1] && k >= lower[2] && k <= upper[2];
  }
};

/// Sub-volume for `box`; the origin moves so retained voxels keep their
/// world positions. Throws InputError if the box is inverted or outside.
ScalarVolume crop_roi(const ScalarVolume& vol, const RoiBox& box);

/// World centres of voxels with value >= threshold, in storage order.
PointCloud threshold_points(const ScalarVolume& vol, double threshold);

/// 64-bit FNV-1a over geometry and voxel values; used as a volume id.
std::uint64_t volume_fingerprint(const ScalarVolume& vol);

}  // namespace brachy
