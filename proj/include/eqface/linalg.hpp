#pragma once

// Dense helpers on top of Eigen. Reductions (dot, matvec) are written as
// explicit left-to-right loops so results do not depend on Eigen's
// vectorized reduction order and are bit-reproducible across calls.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "eqface/errors.hpp"

namespace eqface {

template <typename Scalar>
using VecT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vec = VecT<double>;
using Mat = MatT<double>;

namespace linalg {

inline constexpr double kNormEpsilon = 1e-12;

template <typename DerivedA, typename DerivedB>
void require_same_size(const Eigen::MatrixBase<DerivedA>& a,
                       const Eigen::MatrixBase<DerivedB>& b,
                       const char* what) {
  if (a.size() != b.size()) {
    throw DimensionMismatch(std::string(what) + ": sizes " +
                            std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  }
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar dot(const Eigen::MatrixBase<DerivedA>& a,
                              const Eigen::MatrixBase<DerivedB>& b) {
  require_same_size(a, b, "dot");
  typename DerivedA::Scalar acc(0);
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a(i) * b(i);
  return acc;
}

template <typename Derived>
typename Derived::Scalar norm(const Eigen::MatrixBase<Derived>& v) {
  using std::sqrt;
  return sqrt(dot(v, v));
}

/// Returns v / ||v||. Throws ZeroVector when ||v|| <= 1e-12; a NaN norm is
/// passed through so non-finite values reach the caller's divergence checks.
template <typename Derived>
VecT<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar n = norm(v);
  if (n <= Scalar(kNormEpsilon)) {
    throw ZeroVector("l2_normalize: vector norm below epsilon");
  }
  VecT<Scalar> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = v(i) / n;
  return out;
}

/// y = W v, each row reduced left to right.
template <typename DerivedM, typename DerivedV>
VecT<typename DerivedM::Scalar> matvec(const Eigen::MatrixBase<DerivedM>& w,
                                       const Eigen::MatrixBase<DerivedV>& v) {
  if (w.cols() != v.size()) {
    throw DimensionMismatch("matvec: matrix has " + std::to_string(w.cols()) +
                            " columns, vector has " + std::to_string(v.size()));
  }
  VecT<typename DerivedM::Scalar> out(w.rows());
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    typename DerivedM::Scalar acc(0);
    for (Eigen::Index c = 0; c < w.cols(); ++c) acc += w(r, c) * v(c);
    out(r) = acc;
  }
  return out;
}

/// y = W^T v, reduced left to right over rows.
template <typename DerivedM, typename DerivedV>
VecT<typename DerivedM::Scalar> matvec_transposed(
    const Eigen::MatrixBase<DerivedM>& w, const Eigen::MatrixBase<DerivedV>& v) {
  if (w.rows() != v.size()) {
    throw DimensionMismatch("matvec_transposed: matrix has " +
                            std::to_string(w.rows()) + " rows, vector has " +
                            std::to_string(v.size()));
  }
  VecT<typename DerivedM::Scalar> out(w.cols());
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    typename DerivedM::Scalar acc(0);
    for (Eigen::Index r = 0; r < w.rows(); ++r) acc += w(r, c) * v(r);
    out(c) = acc;
  }
  return out;
}

// y += alpha * x
template <typename DerivedY, typename DerivedX>
void axpy(typename DerivedY::Scalar alpha, const Eigen::MatrixBase<DerivedX>& x,
          Eigen::MatrixBase<DerivedY>& y) {
  require_same_size(x, y, "axpy");
  for (Eigen::Index i = 0; i < x.size(); ++i) y(i) += alpha * x(i);
}

template <typename DerivedA, typename DerivedB>
VecT<typename DerivedA::Scalar> add(const Eigen::MatrixBase<DerivedA>& a,
                                    const Eigen::MatrixBase<DerivedB>& b) {
  require_same_size(a, b, "add");
  return a + b;
}

template <typename Derived>
VecT<typename Derived::Scalar> scale(typename Derived::Scalar alpha,
                                     const Eigen::MatrixBase<Derived>& v) {
  return alpha * v;
}

/// Jacobian-vector product of x -> x/||x|| evaluated at x = raw, applied to
/// `grad`: (I - f f^T) grad / ||raw||, with f = raw/||raw||.
template <typename DerivedR, typename DerivedG>
VecT<typename DerivedR::Scalar> normalize_backward(
    const Eigen::MatrixBase<DerivedR>& raw, const Eigen::MatrixBase<DerivedG>& grad) {
  using Scalar = typename DerivedR::Scalar;
  require_same_size(raw, grad, "normalize_backward");
  const Scalar n = norm(raw);
  if (n <= Scalar(kNormEpsilon)) {
    throw ZeroVector("normalize_backward: vector norm below epsilon");
  }
  VecT<Scalar> f(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) f(i) = raw(i) / n;
  const Scalar proj = dot(f, grad);
  VecT<Scalar> out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) out(i) = (grad(i) - proj * f(i)) / n;
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace linalg
}  // namespace eqface
