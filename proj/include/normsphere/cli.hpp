#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace normsphere::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kInputError = 2 };

/// Entry point of the `normsphere` tool. Text goes to `out`, diagnostics to
/// `err`; the JSON report and CSV plot data go to the files named by
/// --json / --csv (--json - writes the report to `out` instead of the text).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "x0,x1,..." into coordinates; throws InputError on malformed input.
std::vector<double> parse_point(const std::string& text);

/// Points file: either a JSON array of coordinate arrays, or one
/// comma-separated point per line (blank lines and lines starting with '#'
/// are skipped).
std::vector<std::vector<double>> load_points_file(const std::string& path);

}  // namespace normsphere::cli
