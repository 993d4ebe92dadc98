#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "normsphere/errors.hpp"
#include "normsphere/linalg.hpp"
#include "normsphere/norm.hpp"
#include "normsphere/sphere.hpp"

namespace normsphere {

/// Residual above this fraction of the sample radius means the sphere is not
/// flat to first order around the base point.
inline constexpr double kFlatnessThreshold = 0.1;

/// Tangent hyperplane of the sphere through base_point, fitted from sphere
/// samples only (no derivative information).
template <typename Scalar = double>
struct EstimatedTangent {
  Vec<Scalar> base_point;
  Mat<Scalar> basis;   // dim - 1 columns
  Vec<Scalar> normal;  // Euclidean unit normal of the fitted hyperplane
  Scalar sample_radius = 0;
  Scalar residual = 0;  // max distance (in the norm) of a sample to the hyperplane
};

template <typename Scalar>
Vec<Scalar> sphere_point_near(const NormSpec<Scalar>& spec, const Vec<Scalar>& e0, Scalar level,
                              const Vec<Scalar>& perturbation) {
  Vec<Scalar> x = e0 + perturbation;
  return x * (level / spec(x));
}

/// Fits the tangent hyperplane at e0 to points of the sphere S_r, r = |e0|,
/// obtained by renormalizing e0 + p for random p with |p| = sample_radius.
/// The hyperplane passes through e0; its normal is the least significant
/// right singular vector of the matrix of sample offsets.
template <typename Scalar, typename Derived>
EstimatedTangent<Scalar> estimate_tangent(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0,
                                          Scalar sample_radius, int samples, std::uint64_t seed = 0) {
  using std::abs;
  detail::require_nonzero_point(spec, e0, "estimate_tangent");
  const Eigen::Index n = spec.dim();
  const Vec<Scalar> base = e0;
  const Scalar level = spec(base);
  if (!(sample_radius > Scalar(0)) || sample_radius > Scalar(0.05) * level * (Scalar(1) + Scalar(1e-12)))
    throw InputError("estimate_tangent: sample radius must lie in (0, 0.05 |e0|]");
  if (samples < 4 * n) throw InputError("estimate_tangent: need at least 4*dim samples");

  EstimatedTangent<Scalar> out;
  out.base_point = base;
  out.sample_radius = sample_radius;
  if (n == 1) {
    out.basis = Mat<Scalar>(1, 0);
    out.normal = Vec<Scalar>::Constant(1, base(0) > 0 ? Scalar(1) : Scalar(-1));
    return out;
  }

  std::mt19937_64 rng(seed);
  Mat<Scalar> offsets(samples, n);
  for (int s = 0; s < samples; ++s) {
    Vec<Scalar> p = detail::gaussian_vector<Scalar>(rng, n);
    p *= sample_radius / spec(p);
    offsets.row(s) = (sphere_point_near(spec, base, level, p) - base).transpose();
  }

  Eigen::JacobiSVD<Mat<Scalar>> svd(offsets, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv(n - 2) > Scalar(1e-8) * sv(0)))
    throw EstimationError("estimate_tangent: sphere samples do not span a hyperplane");
  out.normal = svd.matrixV().col(n - 1);
  out.basis = svd.matrixV().leftCols(n - 1);

  const Scalar normal_length = spec(out.normal);
  out.residual = (offsets * out.normal).cwiseAbs().maxCoeff() * normal_length;
  const Scalar threshold = Scalar(kFlatnessThreshold) * sample_radius;
  if (out.residual > threshold)
    throw NonManifoldSuspected("estimate_tangent: sphere is not flat to first order at the base point",
                               double(out.residual), double(threshold));
  return out;
}

/// h = tau + lambda e0 with tau in the tangent hyperplane.
template <typename Scalar = double>
struct RayDecomposition {
  Vec<Scalar> tangent_part;
  Scalar ray_coefficient = 0;
};

namespace detail {

template <typename Scalar>
Eigen::PartialPivLU<Mat<Scalar>> tangent_ray_lu(const Mat<Scalar>& basis, const Vec<Scalar>& e0) {
  const Eigen::Index n = e0.size();
  if (basis.rows() != n || basis.cols() != n - 1) throw InputError("tangent basis must have dim - 1 columns");
  Mat<Scalar> m(n, n);
  m << basis, e0;
  // Distance of the unit ray direction from span(basis), via orthonormalized basis.
  Vec<Scalar> ray = e0.normalized();
  if (n > 1) {
    Eigen::HouseholderQR<Mat<Scalar>> qr(basis);
    const Mat<Scalar> q = qr.householderQ() * Mat<Scalar>::Identity(n, n - 1);
    ray -= q * (q.transpose() * ray);
  }
  if (!(ray.norm() > Scalar(1e-10)))
    throw DecompositionError("base point lies in the tangent hyperplane; decomposition is degenerate");
  return Eigen::PartialPivLU<Mat<Scalar>>(m);
}

}  // namespace detail

template <typename Scalar, typename Derived>
RayDecomposition<Scalar> decompose(const EstimatedTangent<Scalar>& tangent, const Eigen::MatrixBase<Derived>& h) {
  const Vec<Scalar> x = h;
  if (x.size() != tangent.base_point.size()) throw InputError("decompose: dimension mismatch");
  const Vec<Scalar> a = detail::tangent_ray_lu(tangent.basis, tangent.base_point).solve(x);
  const Eigen::Index n = x.size();
  RayDecomposition<Scalar> out;
  out.ray_coefficient = a(n - 1);
  out.tangent_part = x - out.ray_coefficient * tangent.base_point;
  return out;
}

template <typename Scalar = double>
struct GeometricDerivative {
  GradientFunctional<Scalar> functional;
  EstimatedTangent<Scalar> tangent;
};

/// The derivative of the norm rebuilt from the tangent hyperplane alone:
/// f(h) = lambda |e0| where h = tau + lambda e0. Equivalently, f vanishes on
/// the tangent basis and f(e0) = |e0|.
template <typename Scalar>
GeometricDerivative<Scalar> geometric_gradient(const EstimatedTangent<Scalar>& tangent, const NormSpec<Scalar>& spec) {
  const Vec<Scalar>& e0 = tangent.base_point;
  detail::require_nonzero_point(spec, e0, "geometric_gradient");
  const Eigen::Index n = e0.size();
  const auto lu = detail::tangent_ray_lu(tangent.basis, e0);
  // Row n-1 of [basis | e0]^-1 extracts lambda; transpose-solve against e_n.
  const Vec<Scalar> last_row = lu.transpose().solve(Vec<Scalar>::Unit(n, n - 1));
  GeometricDerivative<Scalar> out;
  out.functional.coeffs = spec(e0) * last_row;
  out.functional.base_point = e0;
  out.tangent = tangent;
  return out;
}

/// Exact tangent from a TangentFrame, wrapped as an estimate with zero residual.
template <typename Scalar>
EstimatedTangent<Scalar> exact_tangent(const TangentFrame<Scalar>& frame) {
  EstimatedTangent<Scalar> t;
  t.base_point = frame.base_point;
  t.basis = frame.basis;
  t.normal = frame.gradient.coeffs.normalized();
  return t;
}

/// |e0 + tau| - |e0| relative to |tau|; zero for tau = 0.
template <typename Scalar, typename DerivedE, typename DerivedT>
Scalar expansion_ratio(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedE>& e0,
                       const Eigen::MatrixBase<DerivedT>& tau) {
  using std::abs;
  const Scalar size = spec(tau);
  if (size == Scalar(0)) return Scalar(0);
  return abs(spec(Vec<Scalar>(e0 + tau)) - spec(e0)) / size;
}

struct ExpansionReport {
  std::vector<double> step_sizes;       // |tau| relative to |e0|
  std::vector<double> tangent_ratios;   // ||e0 + tau| - |e0|| / |tau|
  std::vector<double> mixed_ratios;     // ||e0 + h| - |e0| - lambda |e0|| / |h|
  double final_threshold = 1e-3;
  bool passed = false;
  std::string message;
};

/// Verifies the first-order expansions at e0 along the given tangent
/// hyperplane on the step grid |tau| = 10^-k |e0|, k = 2..5:
///   |e0 + tau| - |e0| = o(|tau|)
///   |e0 + tau + lambda e0| - |e0| = lambda |e0| + o(|h|)
template <typename Scalar, typename Derived>
ExpansionReport directional_expansion_check(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0,
                                            const EstimatedTangent<Scalar>& tangent) {
  using std::abs;
  using std::pow;
  detail::require_nonzero_point(spec, e0, "directional_expansion_check");
  const Vec<Scalar> base = e0;
  const Scalar level = spec(base);
  ExpansionReport report;
  for (int k = 2; k <= 5; ++k) {
    const Scalar t = pow(Scalar(10), Scalar(-k));
    Scalar worst_tangent = 0;
    Scalar worst_mixed = 0;
    for (Eigen::Index j = 0; j < tangent.basis.cols(); ++j) {
      const Vec<Scalar> b = tangent.basis.col(j) / spec(tangent.basis.col(j));
      for (const Scalar sign : {Scalar(1), Scalar(-1)}) {
        const Vec<Scalar> tau = sign * t * level * b;
        worst_tangent = std::max(worst_tangent, expansion_ratio(spec, base, tau));
        const Scalar lambda = Scalar(0.5) * t;
        const Vec<Scalar> h = tau + lambda * base;
        const Scalar mixed = abs(spec(Vec<Scalar>(base + h)) - level - lambda * level) / spec(h);
        worst_mixed = std::max(worst_mixed, mixed);
      }
    }
    report.step_sizes.push_back(double(t));
    report.tangent_ratios.push_back(double(worst_tangent));
    report.mixed_ratios.push_back(double(worst_mixed));
  }

  // A ratio may stop decreasing once it reaches the noise floor of the
  // tangent estimate; below a tenth of the threshold that is not a failure.
  auto decreasing = [&](const std::vector<double>& r) {
    for (std::size_t i = 1; i < r.size(); ++i)
      if (r[i] > r[i - 1] && r[i] > 0.1 * report.final_threshold) return false;
    return r.back() <= report.final_threshold;
  };
  const bool tangent_ok = decreasing(report.tangent_ratios);
  const bool mixed_ok = decreasing(report.mixed_ratios);
  report.passed = tangent_ok && mixed_ok;
  if (!tangent_ok)
    report.message = "tangent expansion ratio does not vanish: first-order expansion fails";
  else if (!mixed_ok)
    report.message = "mixed expansion ratio does not vanish: derivative is not lambda |e0|";
  return report;
}

struct RoundtripOptions {
  double sample_radius = 1e-3;  // relative to |e0|
  int samples = 0;              // 0 selects 16 * dim
  int chart_samples = 16;
  double gradient_tolerance = 1e-2;  // max coefficient discrepancy, relative to |grad_fd|_inf
  ClassifyOptions classify{};
  std::uint64_t seed = 0;
};

enum class RoundtripVerdict { Consistent, Violation };

inline const char* to_string(RoundtripVerdict v) {
  return v == RoundtripVerdict::Consistent ? "consistent" : "violation";
}

template <typename Scalar = double>
struct RoundtripReport {
  Vec<Scalar> point;
  bool smooth = false;          // derivative route: classifier verdict
  bool chart_ok = false;        // derivative route: chart flattens the sphere
  bool manifold_flat = false;   // geometric route: tangent fit succeeded
  Vec<Scalar> grad_fd;
  Vec<Scalar> grad_geom;        // empty when the geometric route failed
  std::optional<double> max_discrepancy;
  std::optional<double> chart_residual;
  double fit_residual = 0;
  RoundtripVerdict verdict = RoundtripVerdict::Violation;
  std::string detail;
};

/// Runs both directions of the smooth-norm / smooth-sphere equivalence at e0
/// and cross-checks them:
///  - derivative route: classify, build the chart, check that it flattens
///    the sphere and satisfies the normal form;
///  - geometric route: fit the tangent hyperplane from sphere samples and
///    rebuild the derivative from it, compared against central differences.
/// Both routes succeeding with matching gradients, or both failing, is
/// consistent; anything else is a violation.
template <typename Scalar, typename Derived>
RoundtripReport<Scalar> equivalence_roundtrip(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0,
                                              const RoundtripOptions& options = {}) {
  detail::require_nonzero_point(spec, e0, "equivalence_roundtrip");
  const Eigen::Index n = spec.dim();
  const Vec<Scalar> base = e0;
  const Scalar level = spec(base);
  RoundtripReport<Scalar> report;
  report.point = base;
  report.grad_fd = fd_gradient(spec, base).coeffs;

  ClassifyOptions copts = options.classify;
  copts.seed = options.seed;
  const SmoothnessVerdict<Scalar> verdict = classify_point(spec, base, copts);
  report.smooth = verdict.smooth;

  std::vector<std::string> notes;
  if (report.smooth) {
    try {
      const Chart<Scalar> chart = make_chart(spec, base);
      const SphereImageReport image = sphere_chart_image_check(spec, chart, options.chart_samples, options.seed);
      const NormalFormReport normal = chart_normal_form_check(chart, options.chart_samples, options.seed + 1);
      report.chart_residual = std::max({image.max_ray_component, image.max_sphere_defect,
                                        normal.max_normal_form_residual, normal.max_roundtrip_residual});
      report.chart_ok = image.passed() && normal.passed();
      if (!image.passed()) notes.push_back(image.failures.front());
      if (!normal.passed()) notes.push_back(normal.failures.front());
    } catch (const std::exception& err) {
      notes.push_back(std::string("chart: ") + err.what());
    }
  } else {
    notes.push_back("classifier: not differentiable");
  }

  try {
    const int samples = options.samples > 0 ? options.samples : int(16 * n);
    const EstimatedTangent<Scalar> tangent =
        estimate_tangent(spec, base, Scalar(options.sample_radius) * level, samples, options.seed);
    report.fit_residual = double(tangent.residual);
    report.manifold_flat = true;
    report.grad_geom = geometric_gradient(tangent, spec).functional.coeffs;
  } catch (const NonManifoldSuspected& err) {
    report.fit_residual = err.residual();
    notes.push_back("estimate_tangent: non-manifold suspected");
  } catch (const std::exception& err) {
    notes.push_back(std::string("estimate_tangent: ") + err.what());
  }

  const bool derivative_route = report.smooth && report.chart_ok;
  const bool geometric_route = report.manifold_flat && report.grad_geom.size() == n;
  if (derivative_route && geometric_route) {
    const Scalar scale = std::max(Scalar(1), report.grad_fd.cwiseAbs().maxCoeff());
    report.max_discrepancy = double((report.grad_geom - report.grad_fd).cwiseAbs().maxCoeff() / scale);
    if (*report.max_discrepancy <= options.gradient_tolerance) {
      report.verdict = RoundtripVerdict::Consistent;
    } else {
      notes.push_back("gradients disagree beyond tolerance");
    }
  } else if (!derivative_route && !geometric_route) {
    report.verdict = RoundtripVerdict::Consistent;
  } else {
    notes.push_back(derivative_route ? "sphere not flat although the norm is differentiable"
                                     : "sphere flat although the norm is not differentiable");
  }
  for (std::size_t i = 0; i < notes.size(); ++i) report.detail += (i ? "; " : "") + notes[i];
  return report;
}

/// Runs equivalence_roundtrip over many points, concurrently. Point i uses
/// seed options.seed + i, and results are returned in input order, so the
/// output does not depend on scheduling.
template <typename Scalar>
std::vector<RoundtripReport<Scalar>> equivalence_roundtrip_batch(const NormSpec<Scalar>& spec,
                                                                 const std::vector<Vec<Scalar>>& points,
                                                                 const RoundtripOptions& options = {},
                                                                 unsigned threads = 0) {
  std::vector<RoundtripReport<Scalar>> out(points.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, std::max<std::size_t>(1, points.size()));
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < points.size(); i += stride) {
      RoundtripOptions local = options;
      local.seed = options.seed + i;
      out[i] = equivalence_roundtrip(spec, points[i], local);
    }
  };
  std::vector<std::future<void>> tasks;
  for (unsigned t = 1; t < threads; ++t) tasks.push_back(std::async(std::launch::async, work, t, threads));
  work(0, threads);
  for (auto& f : tasks) f.get();
  return out;
}

}  // namespace normsphere
