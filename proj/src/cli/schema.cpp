#include <cmath>

#include "msmsens/cli.hpp"
#include "msmsens/error.hpp"
#include "schema_text.hpp"

namespace msmsens::cli {

namespace {

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

bool has_type(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    if (!v.is_number_float()) return false;
    const double d = v.get<double>();
    return std::isfinite(d) && std::floor(d) == d;
  }
  return false;
}

}  // namespace

std::optional<SchemaIssue> validate(const json& value, const json& schema, const std::string& pointer) {
  const std::string where = pointer.empty() ? "/" : pointer;
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_string()) ok = has_type(value, t.get<std::string>());
    else
      for (const auto& one : t) ok = ok || has_type(value, one.get<std::string>());
    if (!ok) return SchemaIssue{where, "expected type " + t.dump()};
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == value;
    if (!found) return SchemaIssue{where, "value " + value.dump() + " is not one of " + schema["enum"].dump()};
  }
  if (value.is_number()) {
    const double d = value.get<double>();
    if (schema.contains("minimum") && d < schema["minimum"].get<double>())
      return SchemaIssue{where, "must be >= " + schema["minimum"].dump()};
    if (schema.contains("maximum") && d > schema["maximum"].get<double>())
      return SchemaIssue{where, "must be <= " + schema["maximum"].dump()};
    if (schema.contains("exclusiveMinimum") && d <= schema["exclusiveMinimum"].get<double>())
      return SchemaIssue{where, "must be > " + schema["exclusiveMinimum"].dump()};
    if (schema.contains("exclusiveMaximum") && d >= schema["exclusiveMaximum"].get<double>())
      return SchemaIssue{where, "must be < " + schema["exclusiveMaximum"].dump()};
  }
  if (value.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!value.contains(key.get<std::string>()))
          return SchemaIssue{pointer + "/" + escape_token(key.get<std::string>()), "required key is missing"};
    const json empty = json::object();
    const json& props = schema.contains("properties") ? schema["properties"] : empty;
    for (const auto& [key, child] : value.items()) {
      const std::string p = pointer + "/" + escape_token(key);
      if (props.contains(key)) {
        if (auto issue = validate(child, props[key], p)) return issue;
      } else if (schema.contains("additionalProperties")) {
        const auto& extra = schema["additionalProperties"];
        if (extra.is_boolean()) {
          if (!extra.get<bool>()) return SchemaIssue{p, "unknown key"};
        } else if (auto issue = validate(child, extra, p)) {
          return issue;
        }
      }
    }
  }
  if (value.is_array() && schema.contains("items"))
    for (std::size_t i = 0; i < value.size(); ++i)
      if (auto issue = validate(value[i], schema["items"], pointer + "/" + std::to_string(i))) return issue;
  return std::nullopt;
}

const json& run_config_schema() {
  static const json schema = json::parse(kRunConfigSchema);
  return schema;
}

}  // namespace msmsens::cli
