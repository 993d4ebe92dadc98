#include "normsphere/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "normsphere/geom_gradient.hpp"
#include "normsphere/report.hpp"
#include "normsphere/spec_json.hpp"

namespace normsphere::cli {

using nlohmann::json;
using Spec = NormSpec<double>;

namespace {

struct Request {
  std::string command;
  std::string spec_path;
  std::vector<std::string> points;
  std::string points_file;
  std::uint64_t seed = 0;
  std::string json_path;
  std::string csv_path;
  double radius = 0;
  int decades = 4;
  int count = 400;
  int samples = 64;
  int budget = 0;
  double tol_classify = 1e-6;
  double gradient_tol = 1e-2;
  double sample_radius = 1e-3;
};

struct Outcome {
  json results = json::array();
  json summary = json::object();
  std::string text;
  std::string csv;
  bool passed = true;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Vector to_vector(const std::vector<double>& xs) {
  return Eigen::Map<const Vector>(xs.data(), Eigen::Index(xs.size()));
}

std::vector<Vector> request_points(const Request& req, const Spec& spec) {
  std::vector<std::vector<double>> raw;
  for (const std::string& p : req.points) raw.push_back(parse_point(p));
  if (!req.points_file.empty()) {
    auto more = load_points_file(req.points_file);
    raw.insert(raw.end(), more.begin(), more.end());
  }
  if (raw.empty()) throw InputError("no points given (use --point or --points-file)");
  std::vector<Vector> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (Eigen::Index(raw[i].size()) != spec.dim())
      throw InputError("point " + std::to_string(i) + " has " + std::to_string(raw[i].size()) +
                       " coordinates, norm dimension is " + std::to_string(spec.dim()));
    Vector v = to_vector(raw[i]);
    if (v.isZero(0)) throw InputError("point " + std::to_string(i) + " is zero");
    out.push_back(std::move(v));
  }
  return out;
}

json nullable(const std::optional<Vector>& v) { return v ? io::to_json(*v) : json(nullptr); }

Outcome run_grad(const Request& req, const Spec& spec) {
  Outcome o;
  const auto points = request_points(req, spec);
  int smooth = 0;
  std::optional<double> worst;
  std::ostringstream text;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vector& p = points[i];
    const Vector fd = fd_gradient(spec, p).coeffs;
    std::optional<Vector> analytic, geometric;
    try {
      analytic = analytic_gradient(spec, p).coeffs;
    } catch (const NotDifferentiable&) {
    }
    try {
      const double r = spec(p);
      const auto tangent = estimate_tangent(spec, p, req.sample_radius * r, std::max(req.samples, int(4 * spec.dim())), req.seed + i);
      geometric = geometric_gradient(tangent, spec).functional.coeffs;
    } catch (const EstimationError&) {
    }
    bool ok = analytic.has_value() == geometric.has_value();
    std::optional<double> discrepancy;
    if (analytic && geometric) {
      const double scale = std::max(1.0, analytic->cwiseAbs().maxCoeff());
      const double fd_gap = (fd - *analytic).cwiseAbs().maxCoeff() / scale;
      const double geo_gap = (*geometric - *analytic).cwiseAbs().maxCoeff() / scale;
      discrepancy = std::max(fd_gap, geo_gap);
      ok = fd_gap <= 1e-6 && geo_gap <= req.gradient_tol;
      worst = std::max(worst.value_or(0.0), *discrepancy);
    }
    if (analytic) ++smooth;
    o.passed = o.passed && ok;
    o.results.push_back({{"index", i},
                         {"point", io::to_json(p)},
                         {"smooth", analytic.has_value()},
                         {"grad_fd", io::to_json(fd)},
                         {"grad_analytic", nullable(analytic)},
                         {"grad_geom", nullable(geometric)},
                         {"max_discrepancy", discrepancy ? json(*discrepancy) : json(nullptr)},
                         {"passed", ok}});
    text << "point " << io::format_point(p) << "\n";
    text << "  fd gradient:        " << io::format_point(fd) << "\n";
    text << "  analytic gradient:  " << (analytic ? io::format_point(*analytic) : "not differentiable") << "\n";
    text << "  geometric gradient: " << (geometric ? io::format_point(*geometric) : "sphere not flat (corner)") << "\n";
    if (!ok) text << "  CHECK FAILED\n";
  }
  o.summary = {{"points", points.size()},
               {"smooth", smooth},
               {"non_smooth", int(points.size()) - smooth},
               {"max_discrepancy", worst ? json(*worst) : json(nullptr)}};
  o.text = text.str();
  return o;
}

Outcome run_classify(const Request& req, const Spec& spec) {
  Outcome o;
  const auto points = request_points(req, spec);
  int smooth = 0;
  std::ostringstream text;
  for (std::size_t i = 0; i < points.size(); ++i) {
    ClassifyOptions opts;
    opts.tolerance = req.tol_classify;
    opts.direction_budget = req.budget;
    opts.seed = req.seed + i;
    const auto v = classify_point(spec, points[i], opts);
    json r = io::to_json(v);
    r["index"] = i;
    o.results.push_back(std::move(r));
    if (v.smooth) {
      ++smooth;
      text << io::format_point(points[i]) << ": Smooth, gradient " << io::format_point(v.gradient.coeffs) << "\n";
    } else {
      text << io::format_point(points[i]) << ": NonSmooth, witness " << io::format_point(v.witness) << ", slopes "
           << io::format_short(v.right_slope) << " / " << io::format_short(v.left_slope) << "\n";
    }
  }
  o.summary = {{"points", points.size()}, {"smooth", smooth}, {"non_smooth", int(points.size()) - smooth}};
  o.text = text.str();
  return o;
}

Outcome run_chart(const Request& req, const Spec& spec) {
  Outcome o;
  const auto points = request_points(req, spec);
  int smooth = 0;
  double worst = 0;
  std::ostringstream text;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vector& p = points[i];
    json r{{"index", i}, {"point", io::to_json(p)}};
    try {
      const Chart<double> chart = make_chart(spec, p, req.radius);
      ++smooth;
      const auto image = sphere_chart_image_check(spec, chart, req.samples, req.seed + i);
      const auto normal = chart_normal_form_check(chart, req.samples, req.seed + i);
      const bool ok = image.passed() && normal.passed();
      worst = std::max({worst, image.max_ray_component, image.max_sphere_defect, normal.max_normal_form_residual,
                        normal.max_roundtrip_residual});
      r["smooth"] = true;
      r["domain_radius"] = chart.domain_radius;
      r["image"] = io::to_json(image);
      r["normal_form"] = io::to_json(normal);
      r["passed"] = ok;
      o.passed = o.passed && ok;
      text << "chart at " << io::format_point(p) << " (domain radius " << io::format_short(chart.domain_radius) << ")\n"
           << "  tangent basis: ";
      for (Eigen::Index j = 0; j < chart.model_basis().cols(); ++j)
        text << (j ? ", " : "") << io::format_point(chart.model_basis().col(j));
      text << "\n  max ray component of sphere images: " << io::format_short(image.max_ray_component) << "\n"
           << "  max sphere defect of pull-backs:    " << io::format_short(image.max_sphere_defect) << "\n"
           << "  max normal-form residual:           " << io::format_short(normal.max_normal_form_residual) << "\n"
           << "  max round-trip residual:            " << io::format_short(normal.max_roundtrip_residual) << "\n"
           << "  " << (ok ? "passed" : "FAILED") << "\n";
    } catch (const InputError&) {
      throw;
    } catch (const std::runtime_error& e) {
      r["smooth"] = false;
      r["error"] = e.what();
      r["passed"] = false;
      o.passed = false;
      text << "chart at " << io::format_point(p) << ": " << e.what() << "\n";
    }
    o.results.push_back(std::move(r));
  }
  o.summary = {{"points", points.size()},
               {"smooth", smooth},
               {"non_smooth", int(points.size()) - smooth},
               {"max_residual", worst}};
  o.text = text.str();
  return o;
}

Outcome run_probe(const Request& req, const Spec& spec) {
  Outcome o;
  const auto points = request_points(req, spec);
  if (req.decades < 1) throw InputError("--decades must be positive");
  std::ostringstream text;
  std::vector<ProbeRow> all_rows;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vector& p = points[i];
    json r{{"index", i}, {"point", io::to_json(p)}};
    try {
      const auto deltas = default_probe_deltas(spec, p, req.decades, req.seed + i);
      const auto rows = projection_continuity_probe(spec, p, deltas);
      bool decreasing = true;
      for (std::size_t k = 1; k < rows.size(); ++k)
        decreasing = decreasing && rows[k].proj_diff_norm < rows[k - 1].proj_diff_norm;
      r["rows"] = io::to_json(rows);
      r["passed"] = decreasing;
      o.passed = o.passed && decreasing;
      all_rows.insert(all_rows.end(), rows.begin(), rows.end());
      text << "probe at " << io::format_point(p) << "\n  delta_norm        proj_diff_norm    ratio\n";
      for (std::size_t k = 0; k < rows.size(); ++k) {
        char line[128];
        std::snprintf(line, sizeof(line), "  %-16.6g  %-16.6g  %s\n", rows[k].delta_norm, rows[k].proj_diff_norm,
                      k ? io::format_short(rows[k - 1].proj_diff_norm / rows[k].proj_diff_norm).c_str() : "-");
        text << line;
      }
      if (!decreasing) text << "  FAILED: table is not decreasing\n";
    } catch (const NotDifferentiable& e) {
      r["rows"] = json::array();
      r["error"] = e.what();
      r["passed"] = false;
      o.passed = false;
      text << "probe at " << io::format_point(p) << ": " << e.what() << "\n";
    }
    o.results.push_back(std::move(r));
  }
  std::ostringstream csv;
  io::write_probe_csv(csv, all_rows);
  o.csv = csv.str();
  o.summary = {{"points", points.size()}};
  o.text = text.str();
  return o;
}

Outcome run_roundtrip(const Request& req, const Spec& spec) {
  Outcome o;
  const auto points = request_points(req, spec);
  RoundtripOptions opts;
  opts.seed = req.seed;
  opts.sample_radius = req.sample_radius;
  opts.gradient_tolerance = req.gradient_tol;
  opts.classify.tolerance = req.tol_classify;
  opts.classify.direction_budget = req.budget;
  const auto reports = equivalence_roundtrip_batch(spec, points, opts);
  int smooth = 0, violations = 0;
  std::optional<double> worst;
  std::ostringstream text;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& rep = reports[i];
    json r = io::to_json(rep);
    r["index"] = i;
    o.results.push_back(std::move(r));
    if (rep.smooth) ++smooth;
    if (rep.verdict == RoundtripVerdict::Violation) ++violations;
    if (rep.max_discrepancy) worst = std::max(worst.value_or(0.0), *rep.max_discrepancy);
    text << io::format_point(rep.point) << ": " << (rep.smooth ? "smooth" : "non-smooth") << ", "
         << (rep.manifold_flat ? "flat" : "not flat") << ", " << to_string(rep.verdict);
    if (rep.max_discrepancy) text << " (discrepancy " << io::format_short(*rep.max_discrepancy) << ")";
    if (rep.verdict == RoundtripVerdict::Violation) text << ": " << rep.detail;
    text << "\n";
  }
  o.passed = violations == 0;
  o.summary = {{"points", reports.size()},
               {"smooth", smooth},
               {"non_smooth", int(reports.size()) - smooth},
               {"violations", violations},
               {"max_discrepancy", worst ? json(*worst) : json(nullptr)}};
  o.text = text.str() + std::to_string(violations) + " equivalence violation(s) in " + std::to_string(reports.size()) +
           " point(s)\n";
  return o;
}

Outcome run_sphere_sample(const Request& req, const Spec& spec) {
  Outcome o;
  const auto samples = io::sample_sphere(spec, req.count, req.seed);
  for (std::size_t i = 0; i < samples.size(); ++i) o.results.push_back({{"index", i}, {"point", io::to_json(samples[i])}});
  std::ostringstream csv;
  io::write_samples_csv(csv, samples);
  o.csv = csv.str();
  o.summary = {{"points", samples.size()}};
  o.text = req.csv_path.empty() ? o.csv : "wrote " + std::to_string(samples.size()) + " samples to " + req.csv_path + "\n";
  return o;
}

}  // namespace

std::vector<double> parse_point(const std::string& text) {
  std::vector<double> xs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    double x = 0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (!t.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, x);
    if (t.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(x))
      throw InputError("malformed coordinate \"" + t + "\" in point \"" + text + "\"");
    xs.push_back(x);
  }
  if (xs.empty()) throw InputError("empty point");
  return xs;
}

std::vector<std::vector<double>> load_points_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open points file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  std::vector<std::vector<double>> out;
  if (trim(content).rfind('[', 0) == 0) {
    json j;
    try {
      j = json::parse(content);
    } catch (const json::parse_error& e) {
      throw InputError(path + ": malformed JSON at byte " + std::to_string(e.byte));
    }
    if (!j.is_array()) throw InputError(path + ": expected an array of points");
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_array() || j[i].empty()) throw InputError(path + ": point " + std::to_string(i) + " is not an array");
      std::vector<double> p;
      for (const auto& x : j[i]) {
        if (!x.is_number()) throw InputError(path + ": point " + std::to_string(i) + " has a non-numeric coordinate");
        p.push_back(x.get<double>());
      }
      out.push_back(std::move(p));
    }
    return out;
  }
  std::istringstream lines(content);
  std::string line;
  while (std::getline(lines, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.push_back(parse_point(t));
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Charts, gradients and smoothness checks for norms on R^n and their unit spheres", "normsphere"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(io::kToolVersion));
  Request req;

  auto common = [&](CLI::App* sub, bool with_points) {
    sub->add_option("spec", req.spec_path, "Norm description (JSON file)")->required();
    if (with_points) {
      sub->add_option("--point", req.points, "Point as x0,x1,... (repeatable; use --point=-1,2 for negatives)")
          ->allow_extra_args(false);
      sub->add_option("--points-file", req.points_file, "JSON array of points or one x0,x1,... per line");
    }
    sub->add_option("--seed", req.seed, "Seed for random sampling")->capture_default_str();
    sub->add_option("--json", req.json_path, "Write the JSON report to this file ('-' for stdout)");
  };

  auto* grad = app.add_subcommand("grad", "Finite-difference, analytic and geometric gradients");
  common(grad, true);
  grad->add_option("--sample-radius", req.sample_radius, "Tangent-fit sample radius relative to |x|");
  grad->add_option("--samples", req.samples, "Sphere samples for the tangent fit");
  grad->add_option("--gradient-tol", req.gradient_tol, "Allowed geometric vs analytic discrepancy");

  auto* classify = app.add_subcommand("classify", "Smooth / non-smooth verdict with witness direction");
  common(classify, true);
  classify->add_option("--budget", req.budget, "Number of probed directions (default 2*dim)");
  classify->add_option("--tol", req.tol_classify, "Slope mismatch tolerance");

  auto* chart = app.add_subcommand("chart", "Build the normal-form chart and check it");
  common(chart, true);
  chart->add_option("--radius", req.radius, "Chart domain radius (default 0.25 |x|)");
  chart->add_option("--samples", req.samples, "Samples per check");

  auto* probe = app.add_subcommand("probe", "Convergence table of tangent projections");
  common(probe, true);
  probe->add_option("--decades", req.decades, "Number of decades of |delta|")->capture_default_str();
  probe->add_option("--csv", req.csv_path, "Write the table as CSV");

  auto* roundtrip = app.add_subcommand("roundtrip", "Cross-check derivative and sphere geometry at each point");
  common(roundtrip, true);
  roundtrip->add_option("--sample-radius", req.sample_radius, "Tangent-fit sample radius relative to |x|");
  roundtrip->add_option("--gradient-tol", req.gradient_tol, "Allowed gradient discrepancy");
  roundtrip->add_option("--tol", req.tol_classify, "Classifier slope tolerance");
  roundtrip->add_option("--budget", req.budget, "Classifier direction budget");

  auto* sample = app.add_subcommand("sphere-sample", "Write points of the unit sphere for plotting");
  common(sample, false);
  sample->add_option("--count", req.count, "Number of samples")->capture_default_str();
  sample->add_option("--csv", req.csv_path, "Write samples as CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }
  req.command = app.get_subcommands().front()->get_name();

  Outcome outcome;
  Spec spec = Spec::linf(1);
  try {
    spec = io::load_spec_file(req.spec_path);
    if (req.command == "grad") outcome = run_grad(req, spec);
    else if (req.command == "classify") outcome = run_classify(req, spec);
    else if (req.command == "chart") outcome = run_chart(req, spec);
    else if (req.command == "probe") outcome = run_probe(req, spec);
    else if (req.command == "roundtrip") outcome = run_roundtrip(req, spec);
    else outcome = run_sphere_sample(req, spec);

    outcome.summary["passed"] = outcome.passed;
    const json report{{"tool", io::kToolName},
                      {"version", io::kToolVersion},
                      {"schema_version", io::kReportSchemaVersion},
                      {"command", req.command},
                      {"seed", req.seed},
                      {"norm", io::spec_to_json(spec)},
                      {"results", outcome.results},
                      {"summary", outcome.summary}};
    const std::string dumped = report.dump(2) + "\n";
    if (!req.csv_path.empty()) io::write_file(req.csv_path, outcome.csv);
    if (req.json_path == "-") {
      out << dumped;
    } else {
      if (!req.json_path.empty()) io::write_file(req.json_path, dumped);
      out << outcome.text;
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return outcome.passed ? kOk : kCheckFailed;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("normsphere");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(int(argv.size()), argv.data(), out, err);
}

}  // namespace normsphere::cli
