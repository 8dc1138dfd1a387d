#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace msmsens::cli {

using nlohmann::json;

// First schema violation found, located by JSON pointer.
struct SchemaIssue {
  std::string pointer;
  std::string message;
};

// Subset of JSON Schema: type, enum, properties, required,
// additionalProperties (false or a schema), items, minimum, maximum,
// exclusiveMinimum, exclusiveMaximum.
std::optional<SchemaIssue> validate(const json& value, const json& schema, const std::string& pointer = "");

const json& run_config_schema();

// Environment overrides: MSMSENS__SENSITIVITY__MAX=2 sets /sensitivity/max.
// Values are read as JSON when they parse, otherwise as strings.
inline constexpr const char* kEnvPrefix = "MSMSENS__";
void apply_env_overrides(json& config, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> environment_overrides();

// Reads and validates a config file (an empty path means an empty config),
// applying environment overrides before validation. Throws ConfigError.
json load_config(const std::string& path, const std::map<std::string, std::string>& env);

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::optional<std::string> format;
};

// Runs one subcommand on a validated config. Returns the process exit code.
int run_command(const std::string& command, json config, const Flags& flags, std::ostream& log);

// Full command line entry point: 0 success, 2 configuration or usage error,
// 3 data error, 4 numerical failure.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace msmsens::cli
