#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "msmsens/cli.hpp"
#include "msmsens/error.hpp"

extern char** environ;

namespace msmsens::cli {

void apply_env_overrides(json& config, const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, raw] : env) {
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
    std::vector<std::string> path;
    std::string rest = name.substr(prefix.size());
    for (std::size_t pos; (pos = rest.find("__")) != std::string::npos; rest = rest.substr(pos + 2))
      path.push_back(rest.substr(0, pos));
    path.push_back(rest);

    json* node = &config;
    std::string pointer;
    for (std::size_t k = 0; k < path.size(); ++k) {
      std::string key = path[k];
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
      pointer += "/" + key;
      if (key.empty()) throw ConfigError(pointer, "empty key in environment variable " + name);
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError(pointer, "environment variable " + name + " descends into a non-object");
      node = &(*node)[key];
    }
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    *node = std::move(value);
  }
}

std::map<std::string, std::string> environment_overrides() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = entry.substr(0, eq);
    if (key.rfind(kEnvPrefix, 0) == 0) out[key] = entry.substr(eq + 1);
  }
  return out;
}

json load_config(const std::string& path, const std::map<std::string, std::string>& env) {
  json config = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      config = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
    }
    if (!config.is_object()) throw ConfigError("", "config must be a JSON object");
  }
  apply_env_overrides(config, env);
  if (auto issue = validate(config, run_config_schema())) throw ConfigError(issue->pointer, issue->message);
  return config;
}

}  // namespace msmsens::cli
