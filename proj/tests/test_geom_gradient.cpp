#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "normsphere/geom_gradient.hpp"
#include "test_support.hpp"

using namespace normsphere;
using namespace testing_support;

namespace {

// Angle between the hyperplanes with normals a and b.
double normal_angle(const Vector& a, const Vector& b) {
  const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
  return std::acos(std::min(1.0, c));
}

// Points where the max-norm is attained by at least two coordinates, with
// entries from {-1, -0.5, 0, 0.5, 1}.
std::vector<Vector> linf_corners(Eigen::Index n) {
  const double levels[] = {-1, -0.5, 0, 0.5, 1};
  std::vector<Vector> out;
  Eigen::Index total = 1;
  for (Eigen::Index i = 0; i < n; ++i) total *= 5;
  for (Eigen::Index code = 0; code < total; ++code) {
    Vector v(n);
    Eigen::Index c = code;
    for (Eigen::Index i = 0; i < n; ++i, c /= 5) v(i) = levels[c % 5];
    int at_max = 0;
    for (Eigen::Index i = 0; i < n; ++i) at_max += std::abs(v(i)) == 1.0;
    if (at_max >= 2) out.push_back(v);
  }
  return out;
}

// Nonzero points of {-1, 0, 1}^n (ties in the max are irrelevant for the
// 1-norm) that have at least one zero coordinate.
std::vector<Vector> l1_kinks(Eigen::Index n) {
  std::vector<Vector> out;
  Eigen::Index total = 1;
  for (Eigen::Index i = 0; i < n; ++i) total *= 3;
  for (Eigen::Index code = 0; code < total; ++code) {
    Vector v(n);
    Eigen::Index c = code;
    for (Eigen::Index i = 0; i < n; ++i, c /= 3) v(i) = double(c % 3) - 1;
    if (!v.isZero(0) && (v.array() == 0).any()) out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("estimate_tangent examples") {
  const Spec circle = Spec::identity_quadratic(2);
  const auto t = estimate_tangent(circle, vec({1, 0}), 1e-3, 32, 1);
  CHECK(normal_angle(t.basis.col(0), vec({0, 1})) <= 1e-3);
  CHECK(t.residual <= 0.1 * 1e-3);

  const Spec l4 = Spec::lp(4, 2);
  const Vector e0 = vec({1, 1}) / std::pow(2.0, 0.25);
  CHECK(eval_norm(l4, e0) == doctest::Approx(1));
  const auto t4 = estimate_tangent(l4, e0, 1e-3, 32, 2);
  // Analytic tangent: null space of (1,1), i.e. the line through (1,-1).
  CHECK(normal_angle(t4.basis.col(0), vec({1, -1})) <= 1e-2);

  CHECK_THROWS_AS(estimate_tangent(Spec::linf(2), vec({1, 1}), 1e-3, 32, 3), NonManifoldSuspected);
  try {
    estimate_tangent(Spec::linf(2), vec({1, 1}), 1e-3, 32, 3);
  } catch (const NonManifoldSuspected& err) {
    CHECK(err.residual() > err.threshold());
    CHECK(err.threshold() == doctest::Approx(1e-4));
  }
}

TEST_CASE("estimate_tangent validation") {
  const Spec circle = Spec::identity_quadratic(2);
  CHECK_THROWS_AS(estimate_tangent(circle, vec({0, 0}), 1e-3, 32), InputError);
  CHECK_THROWS_AS(estimate_tangent(circle, vec({1, 0}), 0.1, 32), InputError);
  CHECK_THROWS_AS(estimate_tangent(circle, vec({1, 0}), 0.0, 32), InputError);
  CHECK_THROWS_AS(estimate_tangent(circle, vec({1, 0}), 1e-3, 7), InputError);
  CHECK_NOTHROW(estimate_tangent(circle, vec({1, 0}), 0.05, 8));
  // Sphere of the line: the basis is empty.
  const auto line = estimate_tangent(Spec::lp(2, 1), vec({-3}), 1e-3, 4);
  CHECK(line.basis.cols() == 0);
  CHECK(geometric_gradient(line, Spec::lp(2, 1)).functional.coeffs(0) == doctest::Approx(-1));
}

TEST_CASE("estimate_tangent residual separates smooth points from corners") {
  Rng rng(4);
  for (Eigen::Index n : {2, 3, 5}) {
    for (const Spec& spec : smooth_specs(n, rng)) {
      const Vector e0 = rng.away_from_axes(n, 0.3, 1.0);
      const double r = 1e-3 * eval_norm(spec, e0);
      const auto t = estimate_tangent(spec, e0, r, int(16 * n), 5);
      CHECK(t.residual <= 0.1 * r);
      CHECK(t.basis.cols() == n - 1);
      Eigen::FullPivLU<Matrix> lu(t.basis);
      CHECK(lu.rank() == n - 1);
    }
  }
}

TEST_CASE("geometric_gradient examples") {
  const Spec circle = Spec::identity_quadratic(2);
  const auto frame = tangent_frame(circle, vec({0.6, 0.8}));
  CHECK(std::abs(std::abs(frame.basis.col(0).dot(vec({-0.8, 0.6}))) - 1) < 1e-15);
  const auto g = geometric_gradient(exact_tangent(frame), circle).functional;
  CHECK(max_abs_diff(g.coeffs, vec({0.6, 0.8})) < 1e-15);
  CHECK(g.apply(vec({2, -1})) == doctest::Approx(0.6 * 2 - 0.8 * 1));

  // Q = diag(2,1,1): coefficients Q e0 / |e0|_Q.
  Matrix q = Matrix::Identity(3, 3);
  q(0, 0) = 2;
  const Spec spec = Spec::quadratic(q);
  Rng rng(6);
  for (int k = 0; k < 10; ++k) {
    Vector e0 = rng.gaussian(3);
    e0 /= ref_quadratic(e0, q);
    const Vector closed = q * e0 / ref_quadratic(e0, q);
    const Vector oracle = central_difference([&](const Vector& x) { return ref_quadratic(x, q); }, e0, 1e-5);
    CHECK(max_abs_diff(closed, oracle) < 1e-8);
    const auto exact = geometric_gradient(exact_tangent(tangent_frame(spec, e0)), spec).functional;
    CHECK(max_abs_diff(exact.coeffs, closed) < 1e-12);
    const auto est = geometric_gradient(estimate_tangent(spec, e0, 1e-4, 48, k), spec).functional;
    CHECK(max_abs_diff(est.coeffs, closed) < 1e-3);
  }

  EstimatedTangent<double> degenerate;
  degenerate.base_point = vec({1, 0});
  degenerate.basis = vec({2, 0});
  CHECK_THROWS_AS(geometric_gradient(degenerate, circle), DecompositionError);
  CHECK_THROWS_AS(decompose(degenerate, vec({1, 1})), DecompositionError);
}

TEST_CASE("geometric functional vanishes on the tangent and reproduces the norm at e0") {
  Rng rng(7);
  for (Eigen::Index n : {2, 3, 4, 6}) {
    for (const Spec& spec : smooth_specs(n, rng)) {
      const Vector e0 = rng.away_from_axes(n, 0.3, 2.0);
      const auto d = geometric_gradient(estimate_tangent(spec, e0, 1e-3 * eval_norm(spec, e0), int(16 * n), 8), spec);
      const double level = eval_norm(spec, e0);
      CHECK(std::abs(d.functional.apply(e0) - level) <= 1e-12 * level);
      CHECK((d.functional.coeffs.transpose() * d.tangent.basis).cwiseAbs().maxCoeff() < 1e-12 * (1 + d.functional.coeffs.norm()));
      // h = tau + lambda e0 and f(h) = lambda |e0|
      for (int k = 0; k < 5; ++k) {
        const Vector h = rng.gaussian(n);
        const auto parts = decompose(d.tangent, h);
        CHECK(max_abs_diff(parts.tangent_part + parts.ray_coefficient * e0, h) < 1e-12 * (1 + h.norm()));
        CHECK(std::abs(d.functional.apply(h) - parts.ray_coefficient * level) < 1e-10 * (1 + h.norm()));
      }
    }
  }
}

TEST_CASE("gradient routes agree, with error shrinking with the sample radius") {
  Rng rng(9);
  for (Eigen::Index n : {2, 3, 4, 5}) {
    for (int k = 0; k < 5; ++k) {
      const Spec spec = k == 0 ? Spec::identity_quadratic(n) : Spec::quadratic(rng.spd(n));
      Vector e0 = rng.gaussian(n);
      e0 /= eval_norm(spec, e0);
      const Vector fd = fd_gradient(spec, e0).coeffs;
      double previous = 0;
      for (double r : {1e-2, 1e-3}) {
        const Vector geo = geometric_gradient(estimate_tangent(spec, e0, r, int(32 * n), 10 + k), spec).functional.coeffs;
        const double err = (geo - fd).cwiseAbs().maxCoeff();
        CHECK(err <= 10 * r);
        if (r == 1e-3) CHECK(err < previous);
        previous = err;
      }
    }
  }
}

TEST_CASE("geometric gradient is constant along rays") {
  Rng rng(11);
  for (Eigen::Index n : {2, 3, 5}) {
    for (const Spec& spec : smooth_specs(n, rng)) {
      const Vector e0 = rng.away_from_axes(n, 0.3, 1.0);
      const double r = 1e-3 * eval_norm(spec, e0);
      const auto g1 = geometric_gradient(estimate_tangent(spec, e0, r, int(16 * n), 12), spec).functional;
      const Vector e2 = 2 * e0;
      const auto g2 = geometric_gradient(estimate_tangent(spec, e2, 2 * r, int(16 * n), 12), spec).functional;
      CHECK(max_abs_diff(g1.coeffs, g2.coeffs) < 1e-9 * (1 + g1.coeffs.norm()));
    }
  }
}

TEST_CASE("geometric functional is bounded by the ray projection") {
  Rng rng(13);
  for (Eigen::Index n : {2, 3, 4}) {
    for (const Spec& spec : smooth_specs(n, rng)) {
      const Vector e0 = rng.away_from_axes(n, 0.3, 1.0);
      const auto d = geometric_gradient(estimate_tangent(spec, e0, 1e-3 * eval_norm(spec, e0), int(16 * n), 14), spec);
      // Ray projection along the estimated tangent, built by hand.
      Matrix m(n, n);
      m << d.tangent.basis, e0;
      const Matrix inv = m.inverse();
      const Matrix onto_ray = e0 * inv.row(n - 1);
      const double bound = operator_norm(onto_ray);
      CHECK(bound == doctest::Approx(Eigen::JacobiSVD<Matrix>(onto_ray).singularValues()(0)).epsilon(1e-6));
      for (int k = 0; k < 50; ++k) {
        const Vector h = rng.gaussian(n);
        const Vector ph = onto_ray * h;
        const double fh = d.functional.apply(h);
        CHECK(std::abs(std::abs(fh) - eval_norm(spec, ph)) <= 1e-10 * (1 + std::abs(fh)));
        CHECK(ph.norm() <= bound * h.norm() * (1 + 1e-9));
      }
    }
    // For the Euclidean norm both sides use the same norm.
    const Spec euclid = Spec::identity_quadratic(n);
    const Vector e0 = rng.gaussian(n);
    const auto d = geometric_gradient(estimate_tangent(euclid, e0, 1e-3 * e0.norm(), int(16 * n), 15), euclid);
    Matrix m(n, n);
    m << d.tangent.basis, e0;
    const double bound = operator_norm(Matrix(e0 * m.inverse().row(n - 1)));
    for (int k = 0; k < 50; ++k) {
      const Vector h = rng.gaussian(n);
      CHECK(std::abs(d.functional.apply(h)) <= bound * h.norm() * (1 + 1e-9));
    }
  }
}

TEST_CASE("directional_expansion_check examples") {
  const Spec circle = Spec::identity_quadratic(2);
  const Vector e0 = vec({1, 0});
  for (double t : {1e-2, 1e-3, 1e-4}) {
    // sqrt(1+t^2) - 1, written without cancellation
    const double exact = t * t / (std::sqrt(1 + t * t) + 1) / t;
    CHECK(expansion_ratio(circle, e0, vec({0, t})) == doctest::Approx(exact).epsilon(1e-6));
    CHECK(expansion_ratio(circle, e0, vec({0, t})) == doctest::Approx(t / 2).epsilon(1e-3));
  }
  CHECK(expansion_ratio(circle, e0, vec({0, 0})) == 0);

  const auto report = directional_expansion_check(circle, e0, estimate_tangent(circle, e0, 1e-3, 32, 1));
  CHECK(report.passed);
  CHECK(report.tangent_ratios.size() == 4);
  CHECK(report.tangent_ratios.back() <= 1e-3);
  CHECK(report.message.empty());

  // Corner of the square: moving along (t,-t) trades one facet for another.
  const Spec square = Spec::linf(2);
  for (double t : {1e-2, 1e-3, 1e-4, 1e-5}) CHECK(expansion_ratio(square, vec({1, 1}), vec({t, -t})) == doctest::Approx(1));
  EstimatedTangent<double> facet;
  facet.base_point = vec({1, 1});
  facet.basis = vec({-1, 1});  // direction along which one facet looks tangent
  const auto bad = directional_expansion_check(square, vec({1, 1}), facet);
  CHECK_FALSE(bad.passed);
  CHECK_FALSE(bad.message.empty());
}

TEST_CASE("directional_expansion_check passes on smooth families") {
  Rng rng(16);
  for (Eigen::Index n : {2, 3, 4}) {
    for (const Spec& spec : smooth_specs(n, rng)) {
      const Vector e0 = rng.away_from_axes(n, 0.3, 1.0);
      const auto report =
          directional_expansion_check(spec, e0, exact_tangent(tangent_frame(spec, e0)));
      CHECK(report.passed);
    }
  }
}

TEST_CASE("equivalence_roundtrip examples") {
  const auto circle = equivalence_roundtrip(Spec::identity_quadratic(2), vec({0.6, 0.8}));
  CHECK(circle.verdict == RoundtripVerdict::Consistent);
  CHECK(circle.smooth);
  CHECK(circle.chart_ok);
  CHECK(circle.manifold_flat);
  REQUIRE(circle.max_discrepancy.has_value());
  CHECK(*circle.max_discrepancy <= 1e-3);
  REQUIRE(circle.chart_residual.has_value());
  CHECK(*circle.chart_residual <= 1e-9);

  const auto corner = equivalence_roundtrip(Spec::linf(2), vec({1, 1}));
  CHECK(corner.verdict == RoundtripVerdict::Consistent);
  CHECK_FALSE(corner.smooth);
  CHECK_FALSE(corner.manifold_flat);
  CHECK_FALSE(corner.max_discrepancy.has_value());
  CHECK(corner.grad_geom.size() == 0);
  CHECK(corner.detail.find("non-manifold") != std::string::npos);

  Rng rng(17);
  const Spec l15 = Spec::lp(1.5, 3);
  for (int k = 0; k < 5; ++k) {
    Vector e0 = rng.away_from_axes(3, 0.3, 1.0);
    e0 /= eval_norm(l15, e0);
    const auto r = equivalence_roundtrip(l15, e0);
    CHECK(r.verdict == RoundtripVerdict::Consistent);
    REQUIRE(r.max_discrepancy.has_value());
    CHECK(*r.max_discrepancy <= 1e-2);
  }
  CHECK(std::string(to_string(RoundtripVerdict::Violation)) == "violation");
  CHECK_THROWS_AS(equivalence_roundtrip(Spec::linf(2), vec({0, 0})), InputError);
}

TEST_CASE("negative case completeness on corner inventories") {
  for (Eigen::Index n : {2, 3}) {
    const Spec linf = Spec::linf(n);
    for (const Vector& p : linf_corners(n)) {
      INFO("linf corner " << p.transpose());
      CHECK_FALSE(classify_point(linf, p).smooth);
      CHECK_THROWS_AS(estimate_tangent(linf, p, 1e-3 * eval_norm(linf, p), int(16 * n), 1), NonManifoldSuspected);
    }
    const Spec l1 = Spec::l1(n);
    for (const Vector& p : l1_kinks(n)) {
      INFO("l1 kink " << p.transpose());
      CHECK_FALSE(classify_point(l1, p).smooth);
      CHECK_THROWS_AS(estimate_tangent(l1, p, 1e-3 * eval_norm(l1, p), int(16 * n), 1), NonManifoldSuspected);
    }
  }
}

TEST_CASE("roundtrip batch is deterministic and independent of threading") {
  Rng rng(18);
  const Spec spec = Spec::lp(3, 3);
  std::vector<Vector> points;
  for (int k = 0; k < 12; ++k) points.push_back(rng.away_from_axes(3));
  points.push_back(vec({1, 1, 1}));
  const auto serial = equivalence_roundtrip_batch(spec, points, {}, 1);
  const auto parallel = equivalence_roundtrip_batch(spec, points, {}, 4);
  REQUIRE(serial.size() == points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    CHECK(serial[i].point == points[i]);
    CHECK(serial[i].grad_geom == parallel[i].grad_geom);
    CHECK(serial[i].max_discrepancy == parallel[i].max_discrepancy);
    CHECK(serial[i].verdict == RoundtripVerdict::Consistent);
  }
  RoundtripOptions opts;
  opts.seed = 5;
  const auto single = equivalence_roundtrip(spec, points[3], RoundtripOptions{opts.sample_radius, 0, 16, 1e-2, {}, 8});
  CHECK(single.grad_geom == equivalence_roundtrip_batch(spec, points, opts, 3)[3].grad_geom);
}
