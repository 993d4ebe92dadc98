#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "normsphere/errors.hpp"
#include "normsphere/linalg.hpp"

namespace normsphere {

/// Relative tolerance for deciding that two candidates tie for the maximum in
/// max-type norms (LInf, Polyhedral, ProductMax).
inline constexpr double kTieTolerance = 1e-9;

/// Allowed exponent range for the smooth Lp family. Larger exponents lose
/// accuracy in |x|^(p-1).
inline constexpr double kMinExponent = 1.0;
inline constexpr double kMaxExponent = 16.0;

template <typename Scalar>
class NormSpec;

namespace variants {

template <typename Scalar>
struct Lp {
  Scalar p;
};
struct L1 {};
struct LInf {};
template <typename Scalar>
struct Quadratic {
  Mat<Scalar> q;
};
template <typename Scalar>
struct Polyhedral {
  Mat<Scalar> functionals;  // one functional per row
};
template <typename Scalar>
struct ProductMax {
  std::shared_ptr<const NormSpec<Scalar>> left;
  std::shared_ptr<const NormSpec<Scalar>> right;
};

}  // namespace variants

/// Immutable description of a norm on R^n. Build through the named
/// constructors, which validate the norm axioms that cannot be checked later.
template <typename Scalar = double>
class NormSpec {
 public:
  using Lp = variants::Lp<Scalar>;
  using L1 = variants::L1;
  using LInf = variants::LInf;
  using Quadratic = variants::Quadratic<Scalar>;
  using Polyhedral = variants::Polyhedral<Scalar>;
  using ProductMax = variants::ProductMax<Scalar>;
  using Variant = std::variant<Lp, L1, LInf, Quadratic, Polyhedral, ProductMax>;

  static NormSpec lp(Scalar p, Eigen::Index dim) {
    check_dim(dim);
    if (!(p > Scalar(kMinExponent)) || !(p <= Scalar(kMaxExponent)))
      throw InputError("lp: exponent must lie in (1, 16]");
    return NormSpec(Lp{p}, dim);
  }

  static NormSpec l1(Eigen::Index dim) {
    check_dim(dim);
    return NormSpec(L1{}, dim);
  }

  static NormSpec linf(Eigen::Index dim) {
    check_dim(dim);
    return NormSpec(LInf{}, dim);
  }

  static NormSpec quadratic(Mat<Scalar> q) {
    check_dim(q.rows());
    if (q.rows() != q.cols()) throw InputError("quadratic: matrix must be square");
    require_finite(q, "quadratic");
    const Scalar scale = std::max(Scalar(1), q.cwiseAbs().maxCoeff());
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale)
      throw InputError("quadratic: matrix must be symmetric");
    Mat<Scalar> sym = (q + q.transpose()) / Scalar(2);
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(sym, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > Scalar(0)))
      throw InputError("quadratic: matrix must be positive definite");
    const Eigen::Index n = sym.rows();
    return NormSpec(Quadratic{std::move(sym)}, n);
  }

  static NormSpec identity_quadratic(Eigen::Index dim) {
    check_dim(dim);
    return quadratic(Mat<Scalar>::Identity(dim, dim));
  }

  static NormSpec polyhedral(Mat<Scalar> functionals) {
    check_dim(functionals.cols());
    if (functionals.rows() < 1) throw InputError("polyhedral: at least one functional required");
    require_finite(functionals, "polyhedral");
    Eigen::ColPivHouseholderQR<Mat<Scalar>> qr(functionals);
    qr.setThreshold(Scalar(1e-12));
    if (qr.rank() != functionals.cols())
      throw InputError("polyhedral: functionals must have full column rank");
    const Eigen::Index n = functionals.cols();
    return NormSpec(Polyhedral{std::move(functionals)}, n);
  }

  static NormSpec product_max(NormSpec left, NormSpec right) {
    const Eigen::Index n = left.dim() + right.dim();
    return NormSpec(ProductMax{std::make_shared<const NormSpec>(std::move(left)),
                               std::make_shared<const NormSpec>(std::move(right))},
                    n);
  }

  Eigen::Index dim() const { return dim_; }
  const Variant& variant() const { return variant_; }

  template <typename T>
  const T* as() const {
    return std::get_if<T>(&variant_);
  }

  /// Lp with p > 1 and Quadratic are differentiable away from 0.
  bool smooth_family() const {
    return std::holds_alternative<Lp>(variant_) || std::holds_alternative<Quadratic>(variant_);
  }

  template <typename Derived>
  Scalar operator()(const Eigen::MatrixBase<Derived>& x) const {
    if (x.size() != dim_) throw InputError("eval_norm: dimension mismatch");
    return evaluate(x);
  }

 private:
  Scalar evaluate(Eigen::Ref<const Vec<Scalar>> x) const;

  NormSpec(Variant v, Eigen::Index dim) : variant_(std::move(v)), dim_(dim) {}

  static void check_dim(Eigen::Index dim) {
    if (dim < 1) throw InputError("norm dimension must be positive");
  }

  Variant variant_;
  Eigen::Index dim_;
};

template <typename Scalar>
Scalar NormSpec<Scalar>::evaluate(Eigen::Ref<const Vec<Scalar>> x) const {
  using std::abs;
  using std::pow;
  using std::sqrt;
  return std::visit(
      [&](const auto& v) -> Scalar {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, Lp>) {
          const Scalar m = x.cwiseAbs().maxCoeff();
          if (m == Scalar(0)) return Scalar(0);
          Scalar s = 0;
          for (Eigen::Index i = 0; i < x.size(); ++i) s += pow(abs(x(i)) / m, v.p);
          return m * pow(s, Scalar(1) / v.p);
        } else if constexpr (std::is_same_v<V, L1>) {
          return x.cwiseAbs().sum();
        } else if constexpr (std::is_same_v<V, LInf>) {
          return x.cwiseAbs().maxCoeff();
        } else if constexpr (std::is_same_v<V, Quadratic>) {
          const Scalar quad = x.dot(v.q * x);
          return sqrt(std::max(quad, Scalar(0)));
        } else if constexpr (std::is_same_v<V, Polyhedral>) {
          return (v.functionals * x).cwiseAbs().maxCoeff();
        } else {
          const Eigen::Index k = v.left->dim();
          return std::max((*v.left)(x.head(k)), (*v.right)(x.tail(dim_ - k)));
        }
      },
      variant_);
}

template <typename Scalar, typename Derived>
Scalar eval_norm(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& x) {
  return spec(x);
}

/// A linear functional on R^n representing the derivative of the norm at
/// `base_point`.
template <typename Scalar = double>
struct GradientFunctional {
  Vec<Scalar> coeffs;
  Vec<Scalar> base_point;

  template <typename Derived>
  Scalar apply(const Eigen::MatrixBase<Derived>& h) const {
    if (h.size() != coeffs.size()) throw InputError("GradientFunctional::apply: dimension mismatch");
    return coeffs.dot(h);
  }

  template <typename Derived>
  Scalar operator()(const Eigen::MatrixBase<Derived>& h) const {
    return apply(h);
  }
};

namespace detail {

template <typename Scalar, typename Derived>
void require_nonzero_point(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0,
                           const char* op) {
  if (e0.size() != spec.dim()) throw InputError(std::string(op) + ": dimension mismatch");
  require_finite(e0, op);
  if (e0.isZero(0)) throw InputError(std::string(op) + ": base point must be nonzero");
}

// Index of the unique largest entry of `values`, or -1 when another entry is
// within the relative tie tolerance of it.
template <typename Derived>
Eigen::Index unique_argmax(const Eigen::MatrixBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  Eigen::Index best = 0;
  const Scalar top = values.maxCoeff(&best);
  const Scalar slack = Scalar(kTieTolerance) * std::max(top, std::numeric_limits<Scalar>::min());
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (i != best && values(i) >= top - slack) return -1;
  return best;
}

template <typename Scalar>
Vec<Scalar> analytic_coeffs(const NormSpec<Scalar>& spec, const Vec<Scalar>& e0) {
  using std::abs;
  using std::pow;
  const Eigen::Index n = spec.dim();
  return std::visit(
      [&](const auto& v) -> Vec<Scalar> {
        using V = std::decay_t<decltype(v)>;
        using Spec = NormSpec<Scalar>;
        if constexpr (std::is_same_v<V, typename Spec::Lp>) {
          const Scalar r = spec(e0);
          Vec<Scalar> g(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar s = e0(i) > 0 ? Scalar(1) : (e0(i) < 0 ? Scalar(-1) : Scalar(0));
            g(i) = s * pow(abs(e0(i)) / r, v.p - Scalar(1));
          }
          return g;
        } else if constexpr (std::is_same_v<V, typename Spec::L1>) {
          if ((e0.array() == Scalar(0)).any())
            throw NotDifferentiable("l1: a coordinate of the base point is zero");
          return e0.array().sign().matrix();
        } else if constexpr (std::is_same_v<V, typename Spec::LInf>) {
          const Eigen::Index k = unique_argmax(e0.cwiseAbs());
          if (k < 0) throw NotDifferentiable("linf: several coordinates attain the maximum");
          Vec<Scalar> g = Vec<Scalar>::Zero(n);
          g(k) = e0(k) > 0 ? Scalar(1) : Scalar(-1);
          return g;
        } else if constexpr (std::is_same_v<V, typename Spec::Quadratic>) {
          Vec<Scalar> qe = v.q * e0;
          return qe / spec(e0);
        } else if constexpr (std::is_same_v<V, typename Spec::Polyhedral>) {
          Vec<Scalar> values = v.functionals * e0;
          Eigen::Index best = 0;
          const Scalar top = values.cwiseAbs().maxCoeff(&best);
          const Scalar slack = Scalar(kTieTolerance) * top;
          Vec<Scalar> g = (values(best) > 0 ? Scalar(1) : Scalar(-1)) * v.functionals.row(best).transpose();
          // Rows attaining the max must all induce the same signed functional
          // (duplicate or negated rows are not corners).
          for (Eigen::Index i = 0; i < values.size(); ++i) {
            if (i == best || abs(values(i)) < top - slack) continue;
            Vec<Scalar> other = (values(i) > 0 ? Scalar(1) : Scalar(-1)) * v.functionals.row(i).transpose();
            if ((other - g).cwiseAbs().maxCoeff() > Scalar(kTieTolerance) * g.cwiseAbs().maxCoeff())
              throw NotDifferentiable("polyhedral: several functionals attain the maximum");
          }
          return g;
        } else {
          const Eigen::Index k = v.left->dim();
          const Vec<Scalar> a = e0.head(k);
          const Vec<Scalar> b = e0.tail(n - k);
          const Scalar na = (*v.left)(a);
          const Scalar nb = (*v.right)(b);
          const Scalar slack = Scalar(kTieTolerance) * std::max(na, nb);
          Vec<Scalar> g = Vec<Scalar>::Zero(n);
          if (na > nb + slack) {
            g.head(k) = analytic_coeffs(*v.left, a);
          } else if (nb > na + slack) {
            g.tail(n - k) = analytic_coeffs(*v.right, b);
          } else {
            throw NotDifferentiable("product_max: both factors attain the maximum");
          }
          return g;
        }
      },
      spec.variant());
}

}  // namespace detail

/// Closed-form derivative of the norm at e0. Throws NotDifferentiable at
/// corners: ties in a max, or a zero coordinate for L1.
template <typename Scalar, typename Derived>
GradientFunctional<Scalar> analytic_gradient(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0) {
  detail::require_nonzero_point(spec, e0, "analytic_gradient");
  Vec<Scalar> base = e0;
  return {detail::analytic_coeffs(spec, base), base};
}

/// Default central-difference step: cbrt(eps) * max(1, |e0|), capped so that
/// it stays below |e0| / 10.
template <typename Scalar>
Scalar default_fd_step(Scalar norm_e0) {
  using std::cbrt;
  const Scalar h = cbrt(std::numeric_limits<Scalar>::epsilon()) * std::max(Scalar(1), norm_e0);
  return std::min(h, norm_e0 / Scalar(20));
}

template <typename Scalar, typename Derived>
GradientFunctional<Scalar> fd_gradient(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0,
                                       Scalar step) {
  detail::require_nonzero_point(spec, e0, "fd_gradient");
  Vec<Scalar> base = e0;
  const Scalar r = spec(base);
  if (!(step > Scalar(0)) || !(step < r / Scalar(10)))
    throw InputError("fd_gradient: step must satisfy 0 < step < |e0|/10");
  Vec<Scalar> g(spec.dim());
  Vec<Scalar> probe = base;
  for (Eigen::Index i = 0; i < spec.dim(); ++i) {
    probe(i) = base(i) + step;
    const Scalar fwd = spec(probe);
    probe(i) = base(i) - step;
    const Scalar bwd = spec(probe);
    probe(i) = base(i);
    g(i) = (fwd - bwd) / (Scalar(2) * step);
  }
  return {std::move(g), std::move(base)};
}

template <typename Scalar, typename Derived>
GradientFunctional<Scalar> fd_gradient(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0) {
  detail::require_nonzero_point(spec, e0, "fd_gradient");
  return fd_gradient(spec, e0, default_fd_step(spec(e0)));
}

/// Step sequence used by the smoothness classifier, relative to |e0| / |v|.
inline const std::vector<double>& default_step_sequence() {
  static const std::vector<double> steps{1e-3, 1e-4, 1e-5};
  return steps;
}

/// lim_{t -> 0+} (|e0 + t v| - |e0|) / t, extrapolated to t = 0 from the
/// difference quotients at `steps` by Neville's scheme (polynomial
/// extrapolation in t, which removes the O(t) and O(t^2) error terms).
template <typename Scalar, typename DerivedE, typename DerivedV>
Scalar one_sided_derivative(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedE>& e0,
                            const Eigen::MatrixBase<DerivedV>& v, const std::vector<Scalar>& steps) {
  detail::require_nonzero_point(spec, e0, "one_sided_derivative");
  if (v.size() != spec.dim()) throw InputError("one_sided_derivative: direction dimension mismatch");
  require_finite(v, "one_sided_derivative");
  if (v.isZero(0)) throw InputError("one_sided_derivative: direction must be nonzero");
  if (steps.empty()) throw InputError("one_sided_derivative: empty step sequence");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i] > Scalar(0))) throw InputError("one_sided_derivative: steps must be positive");
    if (i > 0 && !(steps[i] < steps[i - 1]))
      throw InputError("one_sided_derivative: steps must be strictly decreasing");
  }

  const Vec<Scalar> base = e0;
  const Vec<Scalar> dir = v;
  const Scalar r = spec(base);
  std::vector<Scalar> table(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Scalar t = steps[i];
    table[i] = (spec(base + t * dir) - r) / t;
  }
  // Neville: table[i] becomes the value at 0 of the interpolant through
  // points i-level..i.
  const auto count = static_cast<std::ptrdiff_t>(steps.size());
  for (std::ptrdiff_t level = 1; level < count; ++level) {
    for (std::ptrdiff_t i = count - 1; i >= level; --i) {
      const Scalar ta = steps[i - level];
      const Scalar tb = steps[i];
      table[i] = (ta * table[i] - tb * table[i - 1]) / (ta - tb);
    }
  }
  return table.back();
}

template <typename Scalar, typename DerivedE, typename DerivedV>
Scalar one_sided_derivative(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedE>& e0,
                            const Eigen::MatrixBase<DerivedV>& v) {
  detail::require_nonzero_point(spec, e0, "one_sided_derivative");
  if (v.size() != spec.dim() || v.isZero(0)) throw InputError("one_sided_derivative: bad direction");
  const Scalar scale = spec(e0) / spec(v);
  std::vector<Scalar> steps;
  for (double s : default_step_sequence()) steps.push_back(Scalar(s) * scale);
  return one_sided_derivative(spec, e0, v, steps);
}

struct ClassifyOptions {
  double tolerance = 1e-6;
  int direction_budget = 0;  // 0 selects 2 * dim
  std::uint64_t seed = 0;
};

template <typename Scalar = double>
struct SmoothnessVerdict {
  bool smooth = false;
  Vec<Scalar> point;
  // Smooth: the central-difference gradient at `point`.
  GradientFunctional<Scalar> gradient;
  // NonSmooth: the worst direction and its one-sided slopes. right_slope is
  // the forward derivative along the witness, left_slope the backward one
  // (minus the forward derivative along -witness); they coincide for a
  // differentiable norm.
  Vec<Scalar> witness;
  Scalar right_slope = 0;
  Scalar left_slope = 0;
  Scalar violation = 0;
};

/// Decides differentiability at e0 by probing one-sided derivatives along the
/// coordinate axes and random unit directions. The point is smooth when every
/// probed direction has matching left and right slopes and both agree with
/// the central-difference gradient.
template <typename Scalar, typename Derived>
SmoothnessVerdict<Scalar> classify_point(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0,
                                         const ClassifyOptions& options = {}) {
  using std::abs;
  detail::require_nonzero_point(spec, e0, "classify_point");
  const Eigen::Index n = spec.dim();
  const int budget = options.direction_budget == 0 ? int(2 * n) : options.direction_budget;
  if (budget < 2 * n) throw InputError("classify_point: direction budget must be at least 2*dim");

  const Vec<Scalar> base = e0;
  const GradientFunctional<Scalar> fd = fd_gradient(spec, base);
  const Scalar tol = Scalar(options.tolerance);

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss;

  SmoothnessVerdict<Scalar> verdict;
  verdict.point = base;
  Scalar worst = -1;
  bool coordinate_witness = false;
  for (int k = 0; k < budget; ++k) {
    Vec<Scalar> v(n);
    const bool axis = k < n;
    if (axis) {
      v = Vec<Scalar>::Unit(n, k);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) v(i) = Scalar(gauss(rng));
      v.normalize();
    }
    const Scalar forward = one_sided_derivative(spec, base, v);
    const Scalar backward = one_sided_derivative(spec, base, Vec<Scalar>(-v));
    const Scalar linear = fd.apply(v);
    const Scalar scale = std::max({Scalar(1), abs(forward), abs(backward)});
    const Scalar violation =
        std::max({forward + backward, abs(forward - linear), abs(backward + linear)}) / scale;
    if (violation <= tol) continue;
    // Coordinate witnesses are preferred over random ones; among coordinate
    // ties the last axis wins.
    const bool better = axis ? (violation >= worst || !coordinate_witness) : (!coordinate_witness && violation > worst);
    if (better) {
      worst = violation;
      coordinate_witness = coordinate_witness || axis;
      verdict.witness = v;
      verdict.right_slope = forward;
      verdict.left_slope = -backward;
      verdict.violation = violation;
    }
  }
  verdict.smooth = worst < 0;
  if (verdict.smooth) verdict.gradient = fd;
  return verdict;
}

/// Combinatorial tie test: true when more than one coordinate attains
/// max_i |x_i| (within the tie tolerance). These are exactly the
/// non-differentiable points of the LInf norm.
template <typename Derived>
bool linf_has_tie(const Eigen::MatrixBase<Derived>& x) {
  return detail::unique_argmax(x.cwiseAbs()) < 0;
}

// Product space R^n = R^k (+) R^(n-k).

template <typename DerivedA, typename DerivedB>
Vec<typename DerivedA::Scalar> product_embed(const Eigen::MatrixBase<DerivedA>& left,
                                             const Eigen::MatrixBase<DerivedB>& right) {
  Vec<typename DerivedA::Scalar> x(left.size() + right.size());
  x << left, right;
  return x;
}

template <typename Derived>
std::pair<Vec<typename Derived::Scalar>, Vec<typename Derived::Scalar>> product_split(
    const Eigen::MatrixBase<Derived>& x, Eigen::Index left_dim) {
  if (left_dim < 0 || left_dim > x.size()) throw InputError("product_split: left dimension out of range");
  return {x.head(left_dim), x.tail(x.size() - left_dim)};
}

/// Sampled estimates of the constants relating |e| to the max-product norm
/// max(|e_left|, |e_right|) of its components:
///   max(|e_left|, |e_right|) <= splitting_bound * |e|
///   |e| <= joining_bound * max(|e_left|, |e_right|)
/// The component norms are the ambient norm restricted to each factor.
struct ProductBounds {
  double splitting_bound = 0;
  double joining_bound = 0;
  int samples = 0;
};

template <typename Scalar>
ProductBounds estimate_product_bounds(const NormSpec<Scalar>& ambient, Eigen::Index left_dim, int samples = 10000,
                                      std::uint64_t seed = 0) {
  const Eigen::Index n = ambient.dim();
  if (left_dim < 1 || left_dim >= n) throw InputError("estimate_product_bounds: left dimension out of range");
  if (samples < 1) throw InputError("estimate_product_bounds: need at least one sample");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  ProductBounds out;
  out.samples = samples;
  Vec<Scalar> e(n);
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) e(i) = Scalar(gauss(rng));
    Vec<Scalar> a = Vec<Scalar>::Zero(n);
    Vec<Scalar> b = Vec<Scalar>::Zero(n);
    a.head(left_dim) = e.head(left_dim);
    b.tail(n - left_dim) = e.tail(n - left_dim);
    const Scalar whole = ambient(e);
    const Scalar product = std::max(ambient(a), ambient(b));
    if (whole == Scalar(0) || product == Scalar(0)) continue;
    out.splitting_bound = std::max(out.splitting_bound, double(product / whole));
    out.joining_bound = std::max(out.joining_bound, double(whole / product));
  }
  return out;
}

}  // namespace normsphere
