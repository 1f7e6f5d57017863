#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mrct/error.hpp"

namespace mrct {

using json = nlohmann::json;

/// Throws ConfigError if `obj` is not an object or has a key outside `allowed`.
inline void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

/// obj[key] converted to T, with a ConfigError naming the key on failure.
template <typename T>
T get_field(const json& obj, std::string_view key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(std::string(where) + ": missing key '" + std::string(key) + "'");
  try {
    return it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + ": key '" + std::string(key) + "' has the wrong type");
  }
}

template <typename T>
T get_field(const json& obj, std::string_view key, std::string_view where, T fallback) {
  if (!obj.contains(key)) return fallback;
  return get_field<T>(obj, key, where);
}

/// Rejects configs written for another schema version.
inline void check_schema_version(const json& obj, std::string_view where) {
  const int v = get_field<int>(obj, "schema_version", where);
  if (v != 1) throw ConfigError(std::string(where) + ": unsupported schema_version " + std::to_string(v));
}

}  // namespace mrct
