#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrct/asymptotics.hpp"
#include "mrct/bootstrap.hpp"
#include "mrct/design.hpp"
#include "mrct/json_util.hpp"
#include "mrct/model.hpp"

namespace mrct::cli {

/// Parses a JSON file; syntax errors become ConfigError with line and column.
json read_json(const std::filesystem::path& path);

/// Config shared by fit, test and calibrate.
struct StudyConfig {
  std::filesystem::path source;
  StudyDesign design;
  std::vector<ModelSpec> specs;
  std::optional<std::filesystem::path> data;  // resolved against the config directory
  std::optional<TestConfig> test;
  std::vector<double> grid;  // calibrate only
};

StudyConfig parse_study_config(const json& j, const std::filesystem::path& source);

struct AsympConfig {
  StudyDesign design;
  std::vector<DoseResponseModel> models;
  std::vector<double> sigma2;
  Target target;
  int draws = 100000;
  std::uint64_t seed = 1;
  std::vector<double> quantiles{0.05, 0.1};
  bool include_samples = false;
};

AsympConfig parse_asymp_config(const json& j, const std::filesystem::path& source);

/// ISO-8601 UTC time of the call.
std::string timestamp_now();

}  // namespace mrct::cli
