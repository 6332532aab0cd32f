#pragma once

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "brachy/geom/transform.hpp"

namespace brachy {

/// Corresponding points: column i of `source` (model frame) maps to
/// column i of `target` (image frame).
template <typename Scalar>
struct CorrespondencePairsT {
  PointCloudT<Scalar> source{3, 0};
  PointCloudT<Scalar> target{3, 0};

  Eigen::Index size() const { return source.cols(); }
};
using CorrespondencePairs = CorrespondencePairsT<double>;

/// Ratio of middle to largest eigenvalue of the centred scatter matrix
/// below which a point set is treated as collinear.
template <typename Scalar>
constexpr Scalar collinearity_ratio() {
  return Scalar(1e-10);
}

template <typename Derived>
void require_noncollinear(const Eigen::MatrixBase<Derived>& pts, const char* what) {
  using Scalar = typename Derived::Scalar;
  const Vec3<Scalar> mean = pts.rowwise().mean();
  const auto centred = (pts.colwise() - mean).eval();
  const Mat3<Scalar> scatter = centred * centred.transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3<Scalar>> eig(scatter, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();  // ascending
  if (!(ev[2] > Scalar(0)) || ev[1] <= collinearity_ratio<Scalar>() * ev[2]) {
    throw DegenerateConfiguration(std::string(what) + " points are coincident or collinear");
  }
}

/// Least-squares rigid transform mapping source onto target, from the
/// dominant eigenvector of Horn's 4×4 symmetric matrix built from the
/// cross-covariance of the centred point sets. Scale is fixed at 1.
template <typename DerivedS, typename DerivedT>
RigidTransform<typename DerivedS::Scalar> absolute_orientation(const Eigen::MatrixBase<DerivedS>& source,
                                                               const Eigen::MatrixBase<DerivedT>& target) {
  using Scalar = typename DerivedS::Scalar;
  if (source.rows() != 3 || target.rows() != 3) throw InputError("correspondences must be 3-D");
  if (source.cols() != target.cols()) {
    throw InputError("correspondence length mismatch: " + std::to_string(source.cols()) + " source vs " +
                     std::to_string(target.cols()) + " target");
  }
  if (source.cols() < 3) throw InputError("at least 3 correspondences required");
  if (!source.allFinite() || !target.allFinite()) throw InputError("non-finite correspondence coordinates");
  require_noncollinear(source, "source");

  const Vec3<Scalar> cs = source.rowwise().mean();
  const Vec3<Scalar> ct = target.rowwise().mean();
  const Mat3<Scalar> m = (source.colwise() - cs) * (target.colwise() - ct).transpose();

  const Scalar sxx = m(0, 0), sxy = m(0, 1), sxz = m(0, 2);
  const Scalar syx = m(1, 0), syy = m(1, 1), syz = m(1, 2);
  const Scalar szx = m(2, 0), szy = m(2, 1), szz = m(2, 2);
  Mat4<Scalar> n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
       syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
       szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
       sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;

  const Eigen::SelfAdjointEigenSolver<Mat4<Scalar>> eig(n);
  const Eigen::Matrix<Scalar, 4, 1> v = eig.eigenvectors().col(3);
  const auto rot = RigidTransform<Scalar>::from_normalized(Eigen::Quaternion<Scalar>(v[0], v[1], v[2], v[3]),
                                                           Vec3<Scalar>::Zero());
  return RigidTransform<Scalar>(rot.rotation(), ct - rot.rotation_matrix() * cs);
}

template <typename Scalar>
RigidTransform<Scalar> absolute_orientation(const CorrespondencePairsT<Scalar>& pairs) {
  return absolute_orientation(pairs.source, pairs.target);
}

/// RMS of ‖target_i − t(source_i)‖.
template <typename Scalar>
Scalar fiducial_registration_error(const RigidTransform<Scalar>& t, const CorrespondencePairsT<Scalar>& pairs) {
  if (pairs.source.cols() != pairs.target.cols()) throw InputError("correspondence length mismatch");
  if (pairs.size() == 0) return Scalar(0);
  const PointCloudT<Scalar> mapped = transform_points(t, pairs.source);
  return std::sqrt((pairs.target - mapped).colwise().squaredNorm().mean());
}

}  // namespace brachy
