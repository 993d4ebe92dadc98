#include "normsphere/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace normsphere::io {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

}  // namespace

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const ProbeRow& row) { return {{"delta_norm", row.delta_norm}, {"proj_diff_norm", row.proj_diff_norm}}; }

json to_json(const std::vector<ProbeRow>& rows) {
  json a = json::array();
  for (const ProbeRow& r : rows) a.push_back(to_json(r));
  return a;
}

json to_json(const SmoothnessVerdict<double>& verdict) {
  json j{{"point", to_json(verdict.point)}, {"smooth", verdict.smooth}};
  if (verdict.smooth) {
    j["gradient"] = to_json(verdict.gradient.coeffs);
    j["witness"] = nullptr;
    j["right_slope"] = nullptr;
    j["left_slope"] = nullptr;
  } else {
    j["gradient"] = nullptr;
    j["witness"] = to_json(verdict.witness);
    j["right_slope"] = verdict.right_slope;
    j["left_slope"] = verdict.left_slope;
  }
  return j;
}

json to_json(const RoundtripReport<double>& report) {
  return {{"point", to_json(report.point)},
          {"smooth", report.smooth},
          {"grad_fd", to_json(report.grad_fd)},
          {"grad_geom", to_json(report.grad_geom)},
          {"max_discrepancy", optional_number(report.max_discrepancy)},
          {"chart_residual", optional_number(report.chart_residual)},
          {"verdict", to_string(report.verdict)}};
}

json to_json(const SphereImageReport& report) {
  return {{"samples", report.samples},
          {"max_ray_component", report.max_ray_component},
          {"max_sphere_defect", report.max_sphere_defect},
          {"failures", report.failures},
          {"passed", report.passed()}};
}

json to_json(const NormalFormReport& report) {
  return {{"samples", report.samples},
          {"max_normal_form_residual", report.max_normal_form_residual},
          {"max_roundtrip_residual", report.max_roundtrip_residual},
          {"failures", report.failures},
          {"passed", report.passed()}};
}

std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string format_short(double x) {
  if (x == 0) return "0";  // also folds -0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

std::string format_point(const Vector& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_short(v(i));
  }
  return s + ")";
}

void write_samples_csv(std::ostream& out, const std::vector<Vector>& samples) {
  const Eigen::Index n = samples.empty() ? 0 : samples.front().size();
  for (Eigen::Index i = 0; i < n; ++i) out << (i ? "," : "") << "x" << i;
  out << "\n";
  for (const Vector& v : samples) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_number(v(i));
    out << "\n";
  }
}

void write_probe_csv(std::ostream& out, const std::vector<ProbeRow>& rows) {
  out << "delta_norm,proj_diff_norm\n";
  for (const ProbeRow& r : rows) out << format_number(r.delta_norm) << "," << format_number(r.proj_diff_norm) << "\n";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << content;
  f.flush();
  if (!f) throw InputError("cannot write " + path);
}

std::vector<Vector> sample_sphere(const NormSpec<double>& spec, int count, std::uint64_t seed) {
  if (count < 1) throw InputError("sample count must be positive");
  const Eigen::Index n = spec.dim();
  std::vector<Vector> out;
  out.reserve(std::size_t(count));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  for (int k = 0; k < count; ++k) {
    Vector x(n);
    if (n == 2) {
      const double theta = 2 * std::numbers::pi * k / count;
      x << std::cos(theta), std::sin(theta);
    } else {
      do {
        for (Eigen::Index i = 0; i < n; ++i) x(i) = gauss(rng);
      } while (x.isZero(0));
    }
    out.push_back(x / spec(x));
  }
  return out;
}

}  // namespace normsphere::io
