#pragma once

// Test-only oracles and generators. Nothing here calls into the code paths
// it is used to check: norms are re-evaluated from their formulas and
// derivatives come from plain central differences.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "normsphere/norm.hpp"

namespace testing_support {

using normsphere::Matrix;
using normsphere::Vector;
using Spec = normsphere::NormSpec<double>;

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

struct Rng {
  explicit Rng(std::uint64_t seed) : engine(seed) {}

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(engine); }
  double gauss() { return std::normal_distribution<double>()(engine); }

  Vector gaussian(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = gauss();
    return v;
  }

  Vector unit(Eigen::Index n) { return gaussian(n).normalized(); }

  // Vector whose coordinates all have magnitude in [lo, hi] with random signs.
  Vector away_from_axes(Eigen::Index n, double lo = 0.3, double hi = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi) * (uniform(0, 1) < 0.5 ? -1.0 : 1.0);
    return v;
  }

  // Symmetric positive definite with eigenvalues in [lo, hi].
  Matrix spd(Eigen::Index n, double lo = 0.5, double hi = 3.0) {
    Matrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) a(i, j) = gauss();
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ();
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = uniform(lo, hi);
    return q * d.asDiagonal() * q.transpose();
  }

  std::mt19937_64 engine;
};

// Formula-level norm evaluations, independent of NormSpec::operator().
inline double ref_lp(const Vector& x, double p) {
  double s = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += std::pow(std::abs(x(i)), p);
  return std::pow(s, 1.0 / p);
}

inline double ref_quadratic(const Vector& x, const Matrix& q) {
  double s = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    for (Eigen::Index j = 0; j < x.size(); ++j) s += x(i) * q(i, j) * x(j);
  return std::sqrt(s);
}

// Central differences of an arbitrary scalar function.
inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

// Richardson-extrapolated central differences over a step sweep, for oracle
// values accurate well beyond a single difference quotient.
inline Vector richardson_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  const Vector d1 = central_difference(f, x, h);
  const Vector d2 = central_difference(f, x, h / 2);
  return (4 * d2 - d1) / 3;
}

inline double max_abs_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Smooth norm families used across suites.
inline std::vector<Spec> smooth_specs(Eigen::Index n, Rng& rng) {
  std::vector<Spec> out;
  for (double p : {1.5, 2.0, 3.0, 4.0}) out.push_back(Spec::lp(p, n));
  out.push_back(Spec::identity_quadratic(n));
  out.push_back(Spec::quadratic(rng.spd(n)));
  return out;
}

}  // namespace testing_support
