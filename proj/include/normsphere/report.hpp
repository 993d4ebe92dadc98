#pragma once

#include <json.hpp>

#include <ostream>
#include <string>
#include <vector>

#include "normsphere/geom_gradient.hpp"
#include "normsphere/norm.hpp"
#include "normsphere/sphere.hpp"

namespace normsphere::io {

inline constexpr const char* kToolName = "normsphere";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kReportSchemaVersion = 1;

nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const ProbeRow& row);
nlohmann::json to_json(const std::vector<ProbeRow>& rows);
nlohmann::json to_json(const SmoothnessVerdict<double>& verdict);
nlohmann::json to_json(const RoundtripReport<double>& report);
nlohmann::json to_json(const SphereImageReport& report);
nlohmann::json to_json(const NormalFormReport& report);

/// Shortest decimal representation that round-trips to the same double.
std::string format_number(double x);
/// Compact human-readable form, ten significant digits.
std::string format_short(double x);
std::string format_point(const Vector& v);

/// CSV with header x0,x1,... and one sample per line.
void write_samples_csv(std::ostream& out, const std::vector<Vector>& samples);
/// CSV with header delta_norm,proj_diff_norm.
void write_probe_csv(std::ostream& out, const std::vector<ProbeRow>& rows);

/// Writes `content` to `path`; throws InputError when the file cannot be written.
void write_file(const std::string& path, const std::string& content);

/// Points of the sphere S_1: an angular sweep in the plane, seeded Gaussian
/// directions otherwise. Each sample is normalized in the given norm.
std::vector<Vector> sample_sphere(const NormSpec<double>& spec, int count, std::uint64_t seed);

}  // namespace normsphere::io
