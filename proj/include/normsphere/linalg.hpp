#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "normsphere/errors.hpp"

namespace normsphere {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = Vec<double>;
using Matrix = Mat<double>;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& x, const char* what) {
  if (!x.allFinite()) throw InputError(std::string(what) + ": non-finite entries");
}

/// Orthonormal basis (as columns) of the null space of the row functional
/// `row`, i.e. the Euclidean orthogonal complement of `row`.
///
/// Uses a Householder reflection of `row`: the reflector maps `row` onto a
/// multiple of the first axis, so its remaining n-1 columns are orthonormal
/// and orthogonal to `row`. This stays well conditioned when `row` is nearly
/// axis aligned, which Gram-Schmidt against the coordinate axes does not.
template <typename Derived>
Mat<typename Derived::Scalar> orthogonal_complement(const Eigen::MatrixBase<Derived>& row) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = row.size();
  if (n < 1) throw InputError("orthogonal_complement: empty functional");
  if (row.squaredNorm() == Scalar(0)) throw InputError("orthogonal_complement: zero functional");
  Mat<Scalar> column = row.derived().transpose().reshaped(n, 1);
  Eigen::HouseholderQR<Mat<Scalar>> qr(column);
  Mat<Scalar> q = qr.householderQ() * Mat<Scalar>::Identity(n, n);
  return q.rightCols(n - 1);
}

/// Largest singular value of `a` by power iteration on a^T a.
/// Stops after `max_iterations` or when the relative change drops below `rel_tol`.
template <typename Derived>
typename Derived::Scalar operator_norm(const Eigen::MatrixBase<Derived>& a, int max_iterations = 200,
                                       typename Derived::Scalar rel_tol = 1e-12) {
  using Scalar = typename Derived::Scalar;
  using std::abs;
  using std::sqrt;
  const Eigen::Index n = a.cols();
  if (n == 0 || a.rows() == 0) return Scalar(0);
  const Scalar frob = a.norm();
  if (frob == Scalar(0)) return Scalar(0);

  // Fixed, non-symmetric start vector so that no singular direction of a
  // structured (axis-aligned) matrix is orthogonal to it.
  Vec<Scalar> x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = Scalar(1) + Scalar(i + 1) / Scalar(n + 1) / Scalar(3);
  x.normalize();

  Scalar sigma = Scalar(0);
  for (int it = 0; it < max_iterations; ++it) {
    Vec<Scalar> ax = a * x;
    Vec<Scalar> y = a.transpose() * ax;
    const Scalar ynorm = y.norm();
    if (ynorm == Scalar(0)) {
      // Start vector in the null space; fall back to the column of largest norm.
      Eigen::Index j = 0;
      a.colwise().norm().maxCoeff(&j);
      x.setZero();
      x(j) = Scalar(1);
      continue;
    }
    const Scalar next = sqrt(ynorm);
    x = y / ynorm;
    if (abs(next - sigma) <= rel_tol * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return (a * x).norm() > sigma ? (a * x).norm() : sigma;
}

/// Projection onto span(range) along span(kernel). The two column blocks must
/// together form a basis of the ambient space.
template <typename DerivedR, typename DerivedK>
Mat<typename DerivedR::Scalar> projection_onto_along(const Eigen::MatrixBase<DerivedR>& range,
                                                     const Eigen::MatrixBase<DerivedK>& kernel) {
  using Scalar = typename DerivedR::Scalar;
  const Eigen::Index n = range.rows();
  if (kernel.rows() != n || range.cols() + kernel.cols() != n)
    throw DecompositionError("projection_onto_along: blocks do not match the ambient dimension");
  const auto orthonormal = [n](const Mat<Scalar>& b) -> Mat<Scalar> {
    if (b.cols() == 0) return b;
    return Eigen::HouseholderQR<Mat<Scalar>>(b).householderQ() * Mat<Scalar>::Identity(n, b.cols());
  };
  const Mat<Scalar> q_range = orthonormal(range);
  Mat<Scalar> m(n, n);
  m << q_range, orthonormal(kernel);
  Eigen::FullPivLU<Mat<Scalar>> lu(m);
  if (!lu.isInvertible()) throw DecompositionError("projection_onto_along: subspaces are not complementary");
  const Mat<Scalar> coords = lu.inverse();
  return q_range * coords.topRows(range.cols());
}

/// Numerical rank of the column block [a | b].
template <typename DerivedA, typename DerivedB>
Eigen::Index joint_rank(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  Mat<Scalar> m(a.rows(), a.cols() + b.cols());
  m << a, b;
  Eigen::ColPivHouseholderQR<Mat<Scalar>> qr(m);
  qr.setThreshold(Scalar(1e-10));
  return qr.rank();
}

}  // namespace normsphere
