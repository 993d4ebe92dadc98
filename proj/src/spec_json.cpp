#include "normsphere/spec_json.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace normsphere::io {

namespace {

using nlohmann::json;

void require_fields(const json& j, const std::string& at, std::initializer_list<const char*> required,
                    std::initializer_list<const char*> optional) {
  std::set<std::string> allowed{"type"};
  for (const char* f : required) {
    allowed.insert(f);
    if (!j.contains(f)) throw SpecError(at, std::string("missing field \"") + f + "\"");
  }
  for (const char* f : optional) allowed.insert(f);
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw SpecError(at + "/" + key, "unknown field");
}

double number(const json& j, const std::string& at) {
  if (!j.is_number()) throw SpecError(at, "expected a number");
  return j.get<double>();
}

Eigen::Index dimension(const json& j, const std::string& at) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw SpecError(at, "expected a positive integer");
  const auto d = j.get<long long>();
  if (d < 1) throw SpecError(at, "expected a positive integer");
  return static_cast<Eigen::Index>(d);
}

Matrix matrix(const json& j, const std::string& at) {
  if (!j.is_array() || j.empty()) throw SpecError(at, "expected a non-empty array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string row_at = at + "/" + std::to_string(i);
    if (!j[i].is_array() || j[i].empty()) throw SpecError(row_at, "expected a non-empty array of numbers");
    if (i == 0) cols = j[i].size();
    if (j[i].size() != cols) throw SpecError(row_at, "rows must have equal length");
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < cols; ++k)
      m(Eigen::Index(i), Eigen::Index(k)) = number(j[i][k], at + "/" + std::to_string(i) + "/" + std::to_string(k));
  return m;
}

void check_optional_dim(const json& j, const std::string& at, Eigen::Index inferred) {
  if (j.contains("dim") && dimension(j["dim"], at + "/dim") != inferred)
    throw SpecError(at + "/dim", "does not match the dimension implied by the other fields");
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

NormSpec<double> spec_from_json(const json& j, const std::string& pointer) {
  using Spec = NormSpec<double>;
  if (!j.is_object()) throw SpecError(pointer, "norm description must be an object");
  if (!j.contains("type") || !j["type"].is_string()) throw SpecError(pointer + "/type", "missing or non-string type");
  const std::string type = j["type"].get<std::string>();
  try {
    if (type == "lp") {
      require_fields(j, pointer, {"p", "dim"}, {});
      return Spec::lp(number(j["p"], pointer + "/p"), dimension(j["dim"], pointer + "/dim"));
    }
    if (type == "l1") {
      require_fields(j, pointer, {"dim"}, {});
      return Spec::l1(dimension(j["dim"], pointer + "/dim"));
    }
    if (type == "linf") {
      require_fields(j, pointer, {"dim"}, {});
      return Spec::linf(dimension(j["dim"], pointer + "/dim"));
    }
    if (type == "quadratic") {
      require_fields(j, pointer, {"q"}, {"dim"});
      Matrix q = matrix(j["q"], pointer + "/q");
      check_optional_dim(j, pointer, q.rows());
      return Spec::quadratic(std::move(q));
    }
    if (type == "polyhedral") {
      require_fields(j, pointer, {"functionals"}, {"dim"});
      Matrix f = matrix(j["functionals"], pointer + "/functionals");
      check_optional_dim(j, pointer, f.cols());
      return Spec::polyhedral(std::move(f));
    }
    if (type == "product_max") {
      require_fields(j, pointer, {"left", "right"}, {"dim"});
      Spec left = spec_from_json(j["left"], pointer + "/left");
      Spec right = spec_from_json(j["right"], pointer + "/right");
      check_optional_dim(j, pointer, left.dim() + right.dim());
      return Spec::product_max(std::move(left), std::move(right));
    }
  } catch (const SpecError&) {
    throw;
  } catch (const InputError& err) {
    throw SpecError(pointer, err.what());
  }
  throw SpecError(pointer + "/type", "unknown norm type \"" + type + "\"");
}

json spec_to_json(const NormSpec<double>& spec) {
  using Spec = NormSpec<double>;
  return std::visit(
      [&](const auto& v) -> json {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, Spec::Lp>) {
          return {{"type", "lp"}, {"p", v.p}, {"dim", spec.dim()}};
        } else if constexpr (std::is_same_v<V, Spec::L1>) {
          return {{"type", "l1"}, {"dim", spec.dim()}};
        } else if constexpr (std::is_same_v<V, Spec::LInf>) {
          return {{"type", "linf"}, {"dim", spec.dim()}};
        } else if constexpr (std::is_same_v<V, Spec::Quadratic>) {
          return {{"type", "quadratic"}, {"q", matrix_json(v.q)}};
        } else if constexpr (std::is_same_v<V, Spec::Polyhedral>) {
          return {{"type", "polyhedral"}, {"functionals", matrix_json(v.functionals)}};
        } else {
          return {{"type", "product_max"}, {"left", spec_to_json(*v.left)}, {"right", spec_to_json(*v.right)}};
        }
      },
      spec.variant());
}

NormSpec<double> parse_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& err) {
    // Recover line and column from the byte offset.
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < err.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw SpecError("line " + std::to_string(line) + ", column " + std::to_string(column), "malformed JSON");
  }
  return spec_from_json(j);
}

NormSpec<double> load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open norm file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_spec(buffer.str());
  } catch (const SpecError& err) {
    throw SpecError(path + ": " + err.where(), std::string(err.what()).substr(err.where().empty() ? 0 : err.where().size() + 2));
  }
}

}  // namespace normsphere::io
