#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "normsphere/errors.hpp"
#include "normsphere/linalg.hpp"
#include "normsphere/norm.hpp"

namespace normsphere {

/// Tangent hyperplane N of the sphere S_r, r = |base_point|, at base_point.
/// N is the null space of `gradient`; `basis` holds an orthonormal basis of N
/// as columns.
template <typename Scalar = double>
struct TangentFrame {
  Vec<Scalar> base_point;
  Mat<Scalar> basis;
  GradientFunctional<Scalar> gradient;
  Scalar base_norm = 0;

  Eigen::Index dim() const { return base_point.size(); }
};

/// Frame for an arbitrary derivative functional (analytic, finite-difference
/// or geometric). The basis is the orthogonal completion of the functional.
template <typename Scalar>
TangentFrame<Scalar> tangent_frame_from_gradient(const NormSpec<Scalar>& spec, GradientFunctional<Scalar> g) {
  detail::require_nonzero_point(spec, g.base_point, "tangent_frame");
  if (g.coeffs.size() != spec.dim()) throw InputError("tangent_frame: functional dimension mismatch");
  TangentFrame<Scalar> frame;
  frame.base_point = g.base_point;
  frame.base_norm = spec(g.base_point);
  frame.basis = orthogonal_complement(g.coeffs);
  frame.gradient = std::move(g);
  return frame;
}

/// Tangent space of the sphere through e0, i.e. the null space of the norm's
/// derivative there. Throws NotDifferentiable at corners.
template <typename Scalar, typename Derived>
TangentFrame<Scalar> tangent_frame(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0) {
  return tangent_frame_from_gradient(spec, analytic_gradient(spec, e0));
}

/// Complementary projections for R^n = N (+) span{e0}:
///   onto_ray(h)     = (g(h) / g(e0)) e0      (onto the ray, along N)
///   onto_tangent(h) = h - onto_ray(h)         (onto N, along the ray)
template <typename Scalar = double>
struct ProjectionPair {
  Mat<Scalar> onto_ray;
  Mat<Scalar> onto_tangent;
  TangentFrame<Scalar> frame;
};

template <typename Scalar>
ProjectionPair<Scalar> projection_pair(const TangentFrame<Scalar>& frame) {
  const Scalar g0 = frame.gradient.apply(frame.base_point);
  if (g0 == Scalar(0)) throw DecompositionError("projection_pair: base point lies in the tangent space");
  const Eigen::Index n = frame.dim();
  ProjectionPair<Scalar> pair;
  pair.onto_ray = frame.base_point * frame.gradient.coeffs.transpose() / g0;
  pair.onto_tangent = Mat<Scalar>::Identity(n, n) - pair.onto_ray;
  pair.frame = frame;
  return pair;
}

/// Local normal-form chart around a nonzero point e0:
///   phi(e) = P_N e + T+(|e| - |e0|),   T+(r) = (r / |e0|) e0,
/// so that |e| = g(phi(e)) + |e0| on the chart domain and phi'(e0) = I.
/// Sphere points map into the tangent hyperplane N, spanned by model_basis().
template <typename Scalar = double>
struct Chart {
  NormSpec<Scalar> spec;
  TangentFrame<Scalar> frame;
  Mat<Scalar> onto_tangent;
  Vec<Scalar> ray_unit;  // e0 / |e0|; T+(r) = r * ray_unit
  Scalar domain_radius = 0;

  const Vec<Scalar>& base_point() const { return frame.base_point; }
  Scalar base_norm() const { return frame.base_norm; }
  const Mat<Scalar>& model_basis() const { return frame.basis; }
  const GradientFunctional<Scalar>& gradient() const { return frame.gradient; }

  Vec<Scalar> t_plus(Scalar r) const { return r * ray_unit; }

  /// Coordinates of a chart image in the orthonormal model basis.
  template <typename Derived>
  Vec<Scalar> model_coordinates(const Eigen::MatrixBase<Derived>& c) const {
    return frame.basis.transpose() * c;
  }
};

namespace detail {

template <typename Scalar>
Vec<Scalar> chart_map(const Chart<Scalar>& chart, const Vec<Scalar>& e) {
  return chart.onto_tangent * e + chart.t_plus(chart.spec(e) - chart.base_norm());
}

template <typename Scalar>
Mat<Scalar> chart_jacobian(const Chart<Scalar>& chart, const Vec<Scalar>& e) {
  const GradientFunctional<Scalar> g = analytic_gradient(chart.spec, e);
  return chart.onto_tangent + chart.ray_unit * g.coeffs.transpose();
}

}  // namespace detail

template <typename Scalar, typename Derived>
Vec<Scalar> chart_forward(const Chart<Scalar>& chart, const Eigen::MatrixBase<Derived>& e) {
  if (e.size() != chart.spec.dim()) throw InputError("chart_forward: dimension mismatch");
  const Vec<Scalar> x = e;
  const Scalar dist = chart.spec(Vec<Scalar>(x - chart.base_point()));
  if (dist > chart.domain_radius) throw DomainError("chart_forward: point outside the chart domain");
  return detail::chart_map(chart, x);
}

struct NewtonOptions {
  int max_iterations = 50;
  double residual_tolerance = 1e-10;
};

/// Solves phi(e) = c by Newton's method from e0 + c. The Jacobian of phi is
/// P_N + T+ o D|.|(e); it equals the identity at e0, so the iteration
/// contracts near the base point.
template <typename Scalar, typename Derived>
Vec<Scalar> chart_inverse(const Chart<Scalar>& chart, const Eigen::MatrixBase<Derived>& c,
                          const NewtonOptions& options = {}) {
  using std::max;
  if (c.size() != chart.spec.dim()) throw InputError("chart_inverse: dimension mismatch");
  require_finite(c, "chart_inverse");
  const Vec<Scalar> target = c;
  if (chart.spec(target) > chart.domain_radius) throw DomainError("chart_inverse: target outside the chart model domain");

  const Scalar scale = max(Scalar(1), chart.base_norm());
  const Scalar tol = Scalar(options.residual_tolerance) * scale;
  const Scalar tiny = Scalar(8) * std::numeric_limits<Scalar>::epsilon() * scale;
  Vec<Scalar> e = chart.base_point() + target;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Vec<Scalar> residual = detail::chart_map(chart, e) - target;
    if (residual.template lpNorm<Eigen::Infinity>() <= tiny) return e;
    Mat<Scalar> jac;
    try {
      jac = detail::chart_jacobian(chart, e);
    } catch (const NotDifferentiable&) {
      throw ConvergenceError("chart_inverse: Newton iterate reached a non-differentiable point");
    }
    const Vec<Scalar> step = jac.partialPivLu().solve(residual);
    if (!step.allFinite()) throw ConvergenceError("chart_inverse: singular Jacobian");
    e -= step;
    if (step.template lpNorm<Eigen::Infinity>() <= tiny) break;
  }
  const Scalar final_residual = (detail::chart_map(chart, e) - target).template lpNorm<Eigen::Infinity>();
  if (final_residual <= tol) return e;
  throw ConvergenceError("chart_inverse: Newton did not converge within the iteration limit");
}

/// Builds the chart at e0. A nonpositive `domain_radius` selects the default
/// 0.25 |e0|; the radius is halved until Newton inversion succeeds at probe
/// points on the domain boundary.
template <typename Scalar, typename Derived>
Chart<Scalar> make_chart(const NormSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& e0,
                         Scalar domain_radius = Scalar(0)) {
  TangentFrame<Scalar> frame = tangent_frame(spec, e0);
  const ProjectionPair<Scalar> proj = projection_pair(frame);
  Chart<Scalar> chart{spec, frame, proj.onto_tangent, frame.base_point / frame.base_norm, Scalar(0)};
  Scalar radius = domain_radius > Scalar(0) ? domain_radius : Scalar(0.25) * frame.base_norm;

  const Eigen::Index n = spec.dim();
  for (int attempt = 0; attempt < 20; ++attempt) {
    chart.domain_radius = radius;
    bool ok = true;
    // Boundary probes: +-tangent basis directions and +-ray direction.
    for (Eigen::Index j = 0; j < n && ok; ++j) {
      const Vec<Scalar> dir = j + 1 < n ? Vec<Scalar>(frame.basis.col(j)) : chart.ray_unit;
      for (const Scalar sign : {Scalar(1), Scalar(-1)}) {
        const Vec<Scalar> c = sign * Scalar(0.999) * radius * dir / spec(dir);
        try {
          chart_inverse(chart, c);
        } catch (const ConvergenceError&) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return chart;
    radius /= Scalar(2);
  }
  throw ConvergenceError("make_chart: could not find a chart domain where Newton inversion converges");
}

/// The chart of the sphere S_r at r * e0: e -> r phi(e / r). Tangent spaces
/// along a ray are parallel, so the frame basis and gradient coefficients
/// carry over unchanged.
template <typename Scalar>
Chart<Scalar> scale_chart(const Chart<Scalar>& chart, Scalar r) {
  if (!(r > Scalar(0))) throw InputError("scale_chart: scale factor must be positive");
  Chart<Scalar> out = chart;
  out.frame.base_point = r * chart.frame.base_point;
  out.frame.gradient.base_point = out.frame.base_point;
  out.frame.base_norm = r * chart.frame.base_norm;
  out.domain_radius = r * chart.domain_radius;
  return out;
}

struct SphereImageReport {
  int samples = 0;
  double max_ray_component = 0;   // |g(phi(e))| over sphere samples e
  double max_sphere_defect = 0;   // ||chart_inverse(c)| - |e0|| over tangent c
  double tolerance = 1e-9;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
};

namespace detail {

template <typename Scalar>
std::string describe_point(const Vec<Scalar>& x) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(double(x(i)));
  }
  return s + ")";
}

template <typename Scalar>
Vec<Scalar> gaussian_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> gauss;
  Vec<Scalar> v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = Scalar(gauss(rng));
  return v;
}

}  // namespace detail

/// Checks that the chart flattens the sphere: sphere points near e0 map into
/// the tangent hyperplane N, and small vectors of N pull back onto the sphere.
template <typename Scalar>
SphereImageReport sphere_chart_image_check(const NormSpec<Scalar>& spec, const Chart<Scalar>& chart, int samples,
                                           std::uint64_t seed = 0, double tolerance = 1e-9) {
  using std::abs;
  if (samples < 1) throw InputError("sphere_chart_image_check: need at least one sample");
  SphereImageReport report;
  report.samples = samples;
  report.tolerance = tolerance;
  const Eigen::Index n = spec.dim();
  const Scalar level = chart.base_norm();
  const Scalar scale = std::max(Scalar(1), level);
  const Scalar tol = Scalar(tolerance) * scale;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto check_image = [&](const Vec<Scalar>& e) {
    const Scalar ray = abs(chart.gradient().apply(chart_forward(chart, e)));
    report.max_ray_component = std::max(report.max_ray_component, double(ray));
    if (ray > tol) report.failures.push_back("chart image leaves the tangent space at " + detail::describe_point(e));
  };

  check_image(chart.base_point());
  for (int s = 0; s < samples; ++s) {
    // Perturb by at most a third of the radius so that the renormalized
    // point stays inside the domain.
    Vec<Scalar> p = detail::gaussian_vector<Scalar>(rng, n);
    p *= Scalar(unit(rng)) * chart.domain_radius / (Scalar(3) * spec(p));
    Vec<Scalar> e = chart.base_point() + p;
    e *= level / spec(e);
    check_image(e);

    Vec<Scalar> coeffs = detail::gaussian_vector<Scalar>(rng, n - 1);
    Vec<Scalar> c = chart.model_basis() * coeffs;
    if (n > 1) c *= Scalar(unit(rng)) * chart.domain_radius / (Scalar(2) * spec(c));
    Vec<Scalar> back;
    try {
      back = chart_inverse(chart, c);
    } catch (const ConvergenceError& err) {
      report.failures.push_back(std::string(err.what()) + " at " + detail::describe_point(c));
      continue;
    }
    const Scalar defect = abs(spec(back) - level);
    report.max_sphere_defect = std::max(report.max_sphere_defect, double(defect));
    if (defect > tol) report.failures.push_back("pull-back leaves the sphere at " + detail::describe_point(c));
  }
  return report;
}

struct NormalFormReport {
  int samples = 0;
  double max_normal_form_residual = 0;  // ||e| - g(phi(e)) - |e0||
  double max_roundtrip_residual = 0;    // |chart_inverse(phi(e)) - e|_inf
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
};

/// Samples points throughout the chart domain and checks the normal form
/// |e| = g(phi(e)) + |e0| and the inverse round trip.
template <typename Scalar>
NormalFormReport chart_normal_form_check(const Chart<Scalar>& chart, int samples, std::uint64_t seed = 0,
                                         double normal_form_tol = 1e-9, double roundtrip_tol = 1e-10) {
  using std::abs;
  if (samples < 1) throw InputError("chart_normal_form_check: need at least one sample");
  NormalFormReport report;
  report.samples = samples;
  const Eigen::Index n = chart.spec.dim();
  const Scalar scale = std::max(Scalar(1), chart.base_norm());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < samples; ++s) {
    Vec<Scalar> p = detail::gaussian_vector<Scalar>(rng, n);
    // Inverse targets must stay inside the model domain as well; |phi(e)| is
    // at most about twice |e - e0| near the base point.
    p *= Scalar(unit(rng)) * chart.domain_radius / (Scalar(2.5) * chart.spec(p));
    const Vec<Scalar> e = chart.base_point() + p;
    const Vec<Scalar> c = chart_forward(chart, e);
    const Scalar nf = abs(chart.spec(e) - chart.gradient().apply(c) - chart.base_norm());
    report.max_normal_form_residual = std::max(report.max_normal_form_residual, double(nf));
    if (nf > Scalar(normal_form_tol) * scale)
      report.failures.push_back("normal form violated at " + detail::describe_point(e));
    try {
      const Vec<Scalar> back = chart_inverse(chart, c);
      const Scalar rt = (back - e).template lpNorm<Eigen::Infinity>();
      report.max_roundtrip_residual = std::max(report.max_roundtrip_residual, double(rt));
      if (rt > Scalar(roundtrip_tol) * scale)
        report.failures.push_back("round trip residual too large at " + detail::describe_point(e));
    } catch (const std::runtime_error& err) {
      report.failures.push_back(std::string(err.what()) + " at " + detail::describe_point(e));
    }
  }
  return report;
}

/// alpha : R0 -> N0 with R1 = { x + alpha(x) : x in R0 } for two complements
/// R0, R1 of the same subspace N0. `ambient` stores alpha o P_{R0 along N0},
/// which agrees with alpha on R0 and vanishes on N0.
template <typename Scalar = double>
struct AlphaOperator {
  Mat<Scalar> ambient;
  Mat<Scalar> coords;  // alpha in bases: R0 coordinates -> N0 coordinates
  Mat<Scalar> r0_basis;
  Mat<Scalar> n0_basis;
  // Graph identity against R1, and ambient against the composed form
  // onto_N0 * onto_R1 * onto_R0.
  Scalar graph_residual = 0;
  Scalar projection_residual = 0;

  template <typename Derived>
  Vec<Scalar> apply(const Eigen::MatrixBase<Derived>& x) const {
    return ambient * x;
  }
};

template <typename Scalar>
AlphaOperator<Scalar> alpha_operator(const Mat<Scalar>& n0_basis, const Mat<Scalar>& r0_basis,
                                     const Mat<Scalar>& r1_basis) {
  const Eigen::Index n = n0_basis.rows();
  if (r0_basis.rows() != n || r1_basis.rows() != n) throw InputError("alpha_operator: ambient dimension mismatch");
  if (r0_basis.cols() != r1_basis.cols() || n0_basis.cols() + r0_basis.cols() != n)
    throw DecompositionError("alpha_operator: subspace dimensions do not add up to the ambient dimension");
  if (joint_rank(n0_basis, r0_basis) != n) throw DecompositionError("alpha_operator: R0 is not a complement of N0");
  if (joint_rank(n0_basis, r1_basis) != n) throw DecompositionError("alpha_operator: R1 is not a complement of N0");

  const Mat<Scalar> onto_r0 = projection_onto_along(r0_basis, n0_basis);
  const Mat<Scalar> onto_r1 = projection_onto_along(r1_basis, n0_basis);
  const Mat<Scalar> onto_n0 = Mat<Scalar>::Identity(n, n) - onto_r0;  // onto N0 along R0

  AlphaOperator<Scalar> alpha;
  // = onto_n0 * onto_r1 * onto_r0
  alpha.ambient = onto_r1 - onto_r0;
  alpha.r0_basis = r0_basis;
  alpha.n0_basis = n0_basis;
  alpha.coords = n0_basis.colPivHouseholderQr().solve(Mat<Scalar>(alpha.ambient * r0_basis));

  const Mat<Scalar> graph = r0_basis + alpha.ambient * r0_basis;
  alpha.graph_residual = (graph - onto_r1 * graph).cwiseAbs().maxCoeff();
  alpha.projection_residual = (onto_n0 * onto_r1 * onto_r0 - alpha.ambient).cwiseAbs().maxCoeff();
  return alpha;
}

template <typename Scalar>
AlphaOperator<Scalar> alpha_operator(const TangentFrame<Scalar>& n0, const Mat<Scalar>& r0_basis,
                                     const Mat<Scalar>& r1_basis) {
  return alpha_operator(n0.basis, r0_basis, r1_basis);
}

struct ProbeRow {
  double delta_norm = 0;
  double proj_diff_norm = 0;
};

/// For each perturbation, the operator norm of P_ray(e0 + delta) - P_ray(e0),
/// where P_ray projects onto the ray along the tangent space at that point.
/// Decays to zero for norms that are C^1 near e0.
template <typename Scalar>
std::vector<ProbeRow> projection_continuity_probe(const NormSpec<Scalar>& spec, const Vec<Scalar>& e0,
                                                  const std::vector<Vec<Scalar>>& deltas) {
  const Mat<Scalar> base = projection_pair(tangent_frame(spec, e0)).onto_ray;
  std::vector<ProbeRow> rows;
  rows.reserve(deltas.size());
  for (const Vec<Scalar>& d : deltas) {
    if (d.size() != spec.dim()) throw InputError("projection_continuity_probe: delta dimension mismatch");
    const Mat<Scalar> moved = projection_pair(tangent_frame(spec, Vec<Scalar>(e0 + d))).onto_ray;
    rows.push_back({double(spec(d)), double(operator_norm(Mat<Scalar>(moved - base)))});
  }
  return rows;
}

/// Geometric sequence |e0| * 10^-k, k = 1..decades, in a fixed random direction.
template <typename Scalar>
std::vector<Vec<Scalar>> default_probe_deltas(const NormSpec<Scalar>& spec, const Vec<Scalar>& e0, int decades,
                                              std::uint64_t seed = 0) {
  if (decades < 1) throw InputError("default_probe_deltas: need at least one decade");
  std::mt19937_64 rng(seed);
  Vec<Scalar> dir = detail::gaussian_vector<Scalar>(rng, spec.dim());
  dir /= spec(dir);
  std::vector<Vec<Scalar>> deltas;
  Scalar size = spec(e0);
  for (int k = 1; k <= decades; ++k) {
    size /= Scalar(10);
    deltas.push_back(size * dir);
  }
  return deltas;
}

/// Compares the ray projections on either side of `center`:
/// |P_ray(center + t v) - P_ray(center - t v)| for each t in `scales`.
/// At a corner of the sphere the two sides keep different tangent spaces and
/// the difference does not vanish as t -> 0.
template <typename Scalar>
std::vector<ProbeRow> projection_jump_probe(const NormSpec<Scalar>& spec, const Vec<Scalar>& center,
                                            const Vec<Scalar>& direction, const std::vector<Scalar>& scales) {
  std::vector<ProbeRow> rows;
  rows.reserve(scales.size());
  for (const Scalar t : scales) {
    const Vec<Scalar> d = t * direction;
    const Mat<Scalar> plus = projection_pair(tangent_frame(spec, Vec<Scalar>(center + d))).onto_ray;
    const Mat<Scalar> minus = projection_pair(tangent_frame(spec, Vec<Scalar>(center - d))).onto_ray;
    rows.push_back({double(spec(d)), double(operator_norm(Mat<Scalar>(plus - minus)))});
  }
  return rows;
}

}  // namespace normsphere
