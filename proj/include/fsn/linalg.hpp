#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "fsn/errors.hpp"

namespace fsn {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Eigen::Index;

/// Non-owning view of one compressed sparse row: parallel index/value arrays.
template <typename Scalar>
struct SparseRowView {
  std::span<const int> index;
  std::span<const Scalar> value;

  std::size_t nnz() const { return index.size(); }

  template <typename Derived>
  Scalar dot(const Eigen::MatrixBase<Derived>& x) const {
    Scalar s(0);
    for (std::size_t k = 0; k < index.size(); ++k) s += value[k] * x(index[k]);
    return s;
  }

  Scalar squared_norm() const {
    Scalar s(0);
    for (const Scalar v : value) s += v * v;
    return s;
  }

  /// y += alpha * row
  template <typename Derived>
  void axpy_into(Scalar alpha, Eigen::MatrixBase<Derived>& y) const {
    for (std::size_t k = 0; k < index.size(); ++k)
      y(index[k]) += alpha * value[k];
  }

  VectorX<Scalar> to_dense(Index d) const {
    VectorX<Scalar> out = VectorX<Scalar>::Zero(d);
    for (std::size_t k = 0; k < index.size(); ++k) out(index[k]) = value[k];
    return out;
  }
};

/// M = Diag(diag) + scale * u u^T with a sparse u.
template <typename Scalar>
struct DiagRank1 {
  VectorX<Scalar> diag;
  Scalar scale{0};
  SparseRowView<Scalar> u;

  template <typename Derived>
  VectorX<Scalar> apply(const Eigen::MatrixBase<Derived>& x) const {
    VectorX<Scalar> y = diag.cwiseProduct(x);
    u.axpy_into(scale * u.dot(x), y);
    return y;
  }
};

/// Solves M x = rhs for M = D + scale u u^T by Sherman-Morrison, in
/// O(d + nnz(u)):  x = D^{-1} rhs - scale <a, rhs> / (1 + scale <a, u>) a,
/// with a = D^{-1} u.
template <typename Scalar, typename Derived>
VectorX<Scalar> solve_diag_rank1(const DiagRank1<Scalar>& m,
                                 const Eigen::MatrixBase<Derived>& rhs) {
  if (!(m.diag.array() > Scalar(0)).all())
    throw NumericalError("solve_diag_rank1: nonpositive diagonal entry");
  VectorX<Scalar> x = rhs.cwiseQuotient(m.diag);
  if (m.scale == Scalar(0) || m.u.nnz() == 0) return x;

  // <a, rhs> and <a, u> only touch the support of u.
  Scalar a_rhs(0), a_u(0);
  for (std::size_t k = 0; k < m.u.nnz(); ++k) {
    const Index j = m.u.index[k];
    const Scalar a_j = m.u.value[k] / m.diag(j);
    a_rhs += a_j * rhs(j);
    a_u += a_j * m.u.value[k];
  }
  const Scalar denom = Scalar(1) + m.scale * a_u;
  if (denom <= Scalar(1e-14))
    throw NumericalError("solve_diag_rank1: Sherman-Morrison denominator vanished");
  const Scalar coef = m.scale * a_rhs / denom;
  for (std::size_t k = 0; k < m.u.nnz(); ++k) {
    const Index j = m.u.index[k];
    x(j) -= coef * m.u.value[k] / m.diag(j);
  }
  return x;
}

/// Moore-Penrose pseudo-inverse through a one-sided Jacobi SVD (BDCSVD in Eigen
/// 3.4.0 loses accuracy on clustered spectra at size >= 16); singular values at or
/// below 1e-12 * sigma_max are treated as zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> pseudo_inverse(
    const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.size() == 0) return MatrixX<Scalar>::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  const Scalar cutoff = Scalar(1e-12) * (sigma.size() ? sigma(0) : Scalar(0));
  VectorX<Scalar> inv = VectorX<Scalar>::Zero(sigma.size());
  for (Index i = 0; i < sigma.size(); ++i)
    if (sigma(i) > cutoff) inv(i) = Scalar(1) / sigma(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Least-norm solution A^+ b. Throws when b is not in range(A), judged by
/// ||A x - b|| > 1e-8 ||b||.
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> least_norm_solve(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() != b.rows())
    throw ConfigError("least_norm_solve: dimension mismatch");
  VectorX<Scalar> x;
  if (a.size() == 0) {
    x = VectorX<Scalar>::Zero(a.cols());
  } else {
    Eigen::JacobiSVD<MatrixX<Scalar>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    const Scalar cutoff = Scalar(1e-12) * sigma(0);
    VectorX<Scalar> utb = svd.matrixU().transpose() * b;
    for (Index i = 0; i < sigma.size(); ++i)
      utb(i) = sigma(i) > cutoff ? utb(i) / sigma(i) : Scalar(0);
    x = svd.matrixV() * utb;
  }
  const Scalar residual = (a * x - b).norm();
  if (residual > Scalar(1e-8) * b.norm())
    throw NumericalError("least_norm_solve: inconsistent system (residual " +
                         std::to_string(static_cast<double>(residual)) + ")");
  return x;
}

/// argmin ||x||_W^2 subject to S^T A x = S^T b, i.e.
///   x = W^{-1} A^T S (S^T A W^{-1} A^T S)^+ S^T b.
template <typename DerivedA, typename DerivedS, typename DerivedW,
          typename DerivedB>
VectorX<typename DerivedA::Scalar> weighted_sketch_project(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedS>& s,
    const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (s.rows() != a.rows() || w.rows() != a.cols() || w.cols() != a.cols() ||
      b.rows() != a.rows())
    throw ConfigError("weighted_sketch_project: dimension mismatch");
  Eigen::LLT<MatrixX<Scalar>> llt(w);
  if (llt.info() != Eigen::Success)
    throw NumericalError("weighted_sketch_project: metric is not positive definite");

  const MatrixX<Scalar> sta = s.transpose() * a;          // tau x p
  const MatrixX<Scalar> winv_ats = llt.solve(sta.transpose());  // p x tau
  const MatrixX<Scalar> gram = sta * winv_ats;             // tau x tau
  const VectorX<Scalar> stb = s.transpose() * b;
  const VectorX<Scalar> y = pseudo_inverse(gram) * stb;
  VectorX<Scalar> x = winv_ats * y;

  const Scalar residual = (sta * x - stb).norm();
  if (residual > Scalar(1e-8) * (stb.norm() + sta.norm() * x.norm()))
    throw NumericalError("weighted_sketch_project: sketched system is inconsistent");
  return x;
}

/// Smallest eigenvalue above 1e-10 * lambda_max of a symmetric PSD matrix.
template <typename Derived>
typename Derived::Scalar min_pos_eig(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols() || m.rows() == 0)
    throw ConfigError("min_pos_eig: expected a nonempty square matrix");
  const MatrixX<Scalar> sym = (m + m.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(sym, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();  // ascending
  const Scalar top = ev(ev.size() - 1);
  if (!(top > Scalar(0)))
    throw NumericalError("min_pos_eig: no positive eigenvalue");
  const Scalar cutoff = Scalar(1e-10) * top;
  for (Index i = 0; i < ev.size(); ++i)
    if (ev(i) > cutoff) return ev(i);
  throw NumericalError("min_pos_eig: no eigenvalue above cutoff");
}

/// W^{-1/2} for symmetric positive definite W.
template <typename Derived>
MatrixX<typename Derived::Scalar> spd_inverse_sqrt(
    const Eigen::MatrixBase<Derived>& w) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(w);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().array() > Scalar(0)).all())
    throw NumericalError("spd_inverse_sqrt: matrix is not positive definite");
  return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace fsn
