#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cmf/types.hpp"

namespace cmf {

/// Singular value thresholding: the proximal operator of tau * nuclear norm.
/// Returns U * max(S - tau, 0) * V^T with m's singular vectors.
template <typename Derived>
MatrixX<typename Derived::Scalar> svt(const Eigen::MatrixBase<Derived>& m,
                                      typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  Eigen::BDCSVD<MatrixX<Scalar>> svd(m.derived(),
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  VectorX<Scalar> s = (svd.singularValues().array() - tau).max(Scalar(0)).matrix();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

/// Sum of singular values.
template <typename Derived>
typename Derived::Scalar nuclear_norm(const Eigen::MatrixBase<Derived>& m) {
  Eigen::BDCSVD<MatrixX<typename Derived::Scalar>> svd(m.derived());
  return svd.singularValues().sum();
}

}  // namespace cmf
