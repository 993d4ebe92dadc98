#pragma once

#include <json.hpp>

#include <string>

#include "normsphere/errors.hpp"
#include "normsphere/norm.hpp"

namespace normsphere::io {

/// Malformed norm description. `where()` is a JSON pointer to the offending
/// value, or "line L, column C" for syntax errors.
class SpecError : public InputError {
 public:
  SpecError(const std::string& where, const std::string& what)
      : InputError(where.empty() ? what : where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// Accepted forms (unknown fields are rejected):
//   {"type":"lp","p":4,"dim":3}
//   {"type":"l1","dim":2}            {"type":"linf","dim":2}
//   {"type":"quadratic","q":[[2,0],[0,1]]}
//   {"type":"polyhedral","functionals":[[1,0],[0,1],[1,1]]}
//   {"type":"product_max","left":{...},"right":{...}}
// quadratic, polyhedral and product_max accept an optional "dim" that must
// match the inferred dimension.
NormSpec<double> spec_from_json(const nlohmann::json& j, const std::string& pointer = "");
nlohmann::json spec_to_json(const NormSpec<double>& spec);

NormSpec<double> parse_spec(const std::string& text);
NormSpec<double> load_spec_file(const std::string& path);

}  // namespace normsphere::io
