#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cmf/types.hpp"

namespace cmf {

/// Orthonormal basis of col(m) via column-pivoted QR; rank decided at
/// rel_tol * |R_00|.
inline Matrix orthonormalize(const Matrix& m, double rel_tol = 1e-12) {
  if (m.cols() == 0) return m;
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(rel_tol);
  const Index r = qr.rank();
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), r);
  return q;
}

inline bool has_orthonormal_columns(const Matrix& m, double tol = 1e-10) {
  const Matrix gram = m.transpose() * m;
  return (gram - Matrix::Identity(m.cols(), m.cols())).cwiseAbs().maxCoeff() <= tol;
}

namespace detail {
inline void require_basis_pair(const Matrix& m, const Matrix& m_hat) {
  if (m.rows() != m_hat.rows())
    throw std::invalid_argument("subspace metrics: row counts differ");
  if (m.cols() == 0 || m_hat.cols() == 0)
    throw std::invalid_argument("subspace metrics: empty basis");
  if (!has_orthonormal_columns(m) || !has_orthonormal_columns(m_hat))
    throw std::invalid_argument("subspace metrics: columns must be orthonormal");
}
}  // namespace detail

/// Principal angle between column spaces, sqrt(1 - sigma^2_{r^k}(Mhat^T M)),
/// in [0,1]: 0 for equal spaces, 1 for orthogonal ones.
inline double principal_angle(const Matrix& m, const Matrix& m_hat) {
  detail::require_basis_pair(m, m_hat);
  Eigen::BDCSVD<Matrix> svd(m_hat.transpose() * m);
  const Index q = std::min(m.cols(), m_hat.cols());
  const double s = std::min(1.0, svd.singularValues()(q - 1));
  return std::sqrt(std::max(0.0, 1.0 - s * s));
}

/// Spectral norm of the projector difference |Mhat Mhat^T - M M^T|.
inline double projection_distance(const Matrix& m, const Matrix& m_hat) {
  detail::require_basis_pair(m, m_hat);
  const Matrix diff = m_hat * m_hat.transpose() - m * m.transpose();
  Eigen::BDCSVD<Matrix> svd(diff);
  return svd.singularValues()(0);
}

/// Spikiness ratio |phi|_max * sqrt(Np) / |phi|_F, in [1, sqrt(Np)].
inline double spikiness_ratio(const Matrix& phi) {
  const double fro = phi.norm();
  if (fro == 0.0) throw std::invalid_argument("spikiness_ratio: zero matrix");
  return phi.cwiseAbs().maxCoeff() *
         std::sqrt(static_cast<double>(phi.rows()) * static_cast<double>(phi.cols())) /
         fro;
}

/// (1/N) T^T (I - P_U) T for an orthonormal basis u_basis; the quantity whose
/// separation from zero makes regression on the recovered confounders
/// well-conditioned. An empty basis (r = 0) yields mean(T^2).
inline double residual_treatment_energy(const Vector& t, const Matrix& u_basis) {
  if (u_basis.cols() > 0) {
    if (t.size() != u_basis.rows())
      throw std::invalid_argument("residual_treatment_energy: length mismatch");
    if (!has_orthonormal_columns(u_basis))
      throw std::invalid_argument("residual_treatment_energy: basis not orthonormal");
    const Vector proj = u_basis.transpose() * t;
    return (t.squaredNorm() - proj.squaredNorm()) / static_cast<double>(t.size());
  }
  return t.squaredNorm() / static_cast<double>(t.size());
}

}  // namespace cmf
