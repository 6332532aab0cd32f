#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "brachy/error.hpp"

namespace brachy {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Mat4 = Eigen::Matrix<Scalar, 4, 4>;

/// Points stored column-wise, one point per column (millimetres, RAS).
template <typename Scalar>
using PointCloudT = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;
using PointCloud = PointCloudT<double>;

template <typename Scalar>
constexpr Scalar unit_quaternion_tolerance() {
  return Scalar(1e-9);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// Rotation matrix of a unit quaternion. Throws InvalidRotation when the
/// quaternion is not unit length within 1e-9.
template <typename Scalar>
Mat3<Scalar> quat_to_matrix(const Eigen::Quaternion<Scalar>& q) {
  const Scalar n = q.norm();
  if (!std::isfinite(n) || std::abs(n - Scalar(1)) > unit_quaternion_tolerance<Scalar>()) {
    throw InvalidRotation("quaternion norm " + std::to_string(double(n)) + " is not 1");
  }
  const Scalar w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3<Scalar> m;
  m << w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return m;
}

/// Flip to the w >= 0 hemisphere; ties on w = 0 resolved by the first
/// nonzero vector component being positive.
template <typename Scalar>
Eigen::Quaternion<Scalar> canonical(const Eigen::Quaternion<Scalar>& q) {
  bool flip = q.w() < 0;
  if (q.w() == 0) {
    for (int i = 0; i < 3; ++i) {
      if (q.vec()[i] != 0) {
        flip = q.vec()[i] < 0;
        break;
      }
    }
  }
  return flip ? Eigen::Quaternion<Scalar>(-q.w(), -q.x(), -q.y(), -q.z()) : q;
}

/// Rigid motion p -> R p + t with R held as a unit quaternion.
template <typename Scalar>
class RigidTransform {
 public:
  using Quaternion = Eigen::Quaternion<Scalar>;
  using Vector = Vec3<Scalar>;

  RigidTransform() : rotation_(Quaternion::Identity()), translation_(Vector::Zero()) {}

  /// Validates ‖q‖ = 1 within tolerance and canonicalises the sign. The
  /// quaternion is not renormalised, so stored values survive serialization.
  RigidTransform(const Quaternion& q, const Vector& t) : rotation_(canonical(q)), translation_(t) {
    if (!t.allFinite()) throw InputError("non-finite translation");
    quat_to_matrix(rotation_);
  }

  static RigidTransform identity() { return {}; }
  static RigidTransform translation(const Vector& t) { return {Quaternion::Identity(), t}; }

  /// Builds from an arbitrary nonzero quaternion, normalising it first.
  static RigidTransform from_normalized(Quaternion q, const Vector& t) {
    const Scalar n = q.norm();
    if (!(n > Scalar(0)) || !std::isfinite(n)) throw InvalidRotation("zero quaternion");
    q.coeffs() /= n;
    return {q, t};
  }

  /// Nearest rotation to `m` (via its quaternion) plus translation.
  static RigidTransform from_matrix(const Mat3<Scalar>& m, const Vector& t) {
    return from_normalized(Quaternion(m), t);
  }

  static RigidTransform axis_angle(const Vector& axis, Scalar radians, const Vector& t = Vector::Zero()) {
    return from_normalized(Quaternion(Eigen::AngleAxis<Scalar>(radians, axis.normalized())), t);
  }

  const Quaternion& rotation() const { return rotation_; }
  const Vector& translation() const { return translation_; }
  Mat3<Scalar> rotation_matrix() const { return quat_to_matrix(rotation_); }

  Mat4<Scalar> homogeneous() const {
    Mat4<Scalar> h = Mat4<Scalar>::Identity();
    h.template topLeftCorner<3, 3>() = rotation_matrix();
    h.template topRightCorner<3, 1>() = translation_;
    return h;
  }

  Vector operator()(const Vector& p) const { return rotation_matrix() * p + translation_; }

  template <typename T>
  RigidTransform<T> cast() const {
    return RigidTransform<T>(rotation_.template cast<T>(), translation_.template cast<T>());
  }

 private:
  Quaternion rotation_;
  Vector translation_;
};

using RigidTransformd = RigidTransform<double>;

/// compose(a, b)(p) == a(b(p)).
template <typename Scalar>
RigidTransform<Scalar> compose(const RigidTransform<Scalar>& a, const RigidTransform<Scalar>& b) {
  return RigidTransform<Scalar>::from_normalized(a.rotation() * b.rotation(),
                                                 a.rotation_matrix() * b.translation() + a.translation());
}

template <typename Scalar>
RigidTransform<Scalar> invert(const RigidTransform<Scalar>& t) {
  const auto q = t.rotation().conjugate();
  return RigidTransform<Scalar>(q, -(quat_to_matrix(q) * t.translation()));
}

template <typename Scalar, typename Derived>
PointCloudT<Scalar> transform_points(const RigidTransform<Scalar>& t, const Eigen::MatrixBase<Derived>& pts) {
  PointCloudT<Scalar> out = t.rotation_matrix() * pts;
  out.colwise() += t.translation();
  return out;
}

/// Rotation angle (radians) of a^-1 ∘ b.
template <typename Scalar>
Scalar rotation_distance(const RigidTransform<Scalar>& a, const RigidTransform<Scalar>& b) {
  return a.rotation().angularDistance(b.rotation());
}

}  // namespace brachy
