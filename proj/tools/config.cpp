#include "config.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>

namespace mrct::cli {

namespace {

StudyDesign parse_design(const json& j, const std::string& where) {
  check_keys(j, {"doses", "allocations", "weights", "labels"}, where);
  auto doses = get_field<std::vector<double>>(j, "doses", where);
  auto alloc = get_field<std::vector<std::vector<int>>>(j, "allocations", where);
  auto weights = get_field<std::vector<double>>(j, "weights", where);
  auto labels = get_field<std::vector<std::string>>(j, "labels", where, {});
  try {
    return StudyDesign(std::move(doses), std::move(alloc), std::move(weights), std::move(labels));
  } catch (const DataError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

ModelSpec parse_spec(const json& j, double max_dose, const std::string& where) {
  const auto family = parse_family(get_field<std::string>(j, "family", where));
  const double hill = get_field<double>(j, "hill", where, 1.0);
  if (!(hill > 0.0)) throw ConfigError(where + ": hill must be positive");
  ModelSpec spec = ModelSpec::defaults(family, max_dose, hill);
  if (j.contains("bounds")) {
    auto b = get_field<std::vector<std::vector<double>>>(j, "bounds", where);
    if (static_cast<int>(b.size()) != spec.num_params()) {
      throw ConfigError(fmt::format("{}: {} bounds given, family has {} parameters", where, b.size(), spec.num_params()));
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (b[i].size() != 2 || !(b[i][0] < b[i][1])) throw ConfigError(where + ": each bound must be [lo, hi] with lo < hi");
      spec.bounds[i] = {b[i][0], b[i][1]};
    }
  }
  return spec;
}

/// One object for all subgroups or an array with one entry per subgroup.
std::vector<json> per_subgroup(const json& j, int k, const std::string& where) {
  if (j.is_object()) return std::vector<json>(k, j);
  if (!j.is_array() || static_cast<int>(j.size()) != k) {
    throw ConfigError(fmt::format("{}: expected one object or an array of {} objects", where, k));
  }
  return {j.begin(), j.end()};
}

int parse_subgroup(const json& j, const StudyDesign& design, const std::string& where) {
  std::optional<int> idx;
  if (j.is_number_integer()) {
    const int v = j.get<int>();
    if (v >= 1 && v <= design.num_subgroups()) idx = v - 1;
  } else if (j.is_string()) {
    idx = design.find_subgroup(j.get<std::string>());
  }
  if (!idx) throw ConfigError(fmt::format("{}: unknown subgroup {}", where, j.dump()));
  return *idx;
}

Target parse_target(const json& j, const StudyDesign& design, bool allow_iu, const std::string& where) {
  check_keys(j, {"kind", "subgroups"}, where);
  const auto kind = get_field<std::string>(j, "kind", where);
  std::vector<int> subgroups;
  if (j.contains("subgroups")) {
    const auto& list = j.at("subgroups");
    if (!list.is_array()) throw ConfigError(where + ": subgroups must be an array");
    for (const auto& s : list) subgroups.push_back(parse_subgroup(s, design, where));
  } else {
    for (int l = 0; l < design.num_subgroups(); ++l) subgroups.push_back(l);
  }
  if (kind == "one") {
    if (subgroups.size() != 1) throw ConfigError(where + ": kind 'one' needs exactly one subgroup");
    return Target::one(subgroups[0]);
  }
  if (kind == "many") return Target::many(std::move(subgroups));
  if (kind == "iu" && allow_iu) return Target::intersection_union(std::move(subgroups));
  throw ConfigError(fmt::format("{}: unknown target kind '{}'", where, kind));
}

std::vector<double> parse_grid(const json& j, const std::string& where) {
  if (j.is_array()) {
    try {
      return j.get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError(where + ": grid entries must be numbers");
    }
  }
  check_keys(j, {"from", "to", "step"}, where);
  const double from = get_field<double>(j, "from", where);
  const double to = get_field<double>(j, "to", where);
  const double step = get_field<double>(j, "step", where);
  if (!(step > 0.0) || !(to >= from)) throw ConfigError(where + ": need step > 0 and to >= from");
  std::vector<double> grid;
  const auto count = static_cast<long>(std::floor((to - from) / step + 1e-9));
  // Rounded to 12 decimals so that e.g. 3 * 0.05 prints as 0.15.
  for (long i = 0; i <= count; ++i) grid.push_back(std::round((from + static_cast<double>(i) * step) * 1e12) / 1e12);
  return grid;
}

}  // namespace

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; translate it to line and column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(fmt::format("{}:{}:{}: invalid JSON ({})", path.string(), line, col, e.what()));
  }
}

StudyConfig parse_study_config(const json& j, const std::filesystem::path& source) {
  const std::string where = source.filename().string();
  check_keys(j, {"schema_version", "design", "models", "data", "test", "calibrate"}, where);
  check_schema_version(j, where);

  StudyConfig cfg{source, parse_design(get_field<json>(j, "design", where), where + ".design"), {}, {}, {}, {}};
  const int k = cfg.design.num_subgroups();
  for (const auto& m : per_subgroup(get_field<json>(j, "models", where), k, where + ".models")) {
    check_keys(m, {"family", "hill", "bounds"}, where + ".models");
    cfg.specs.push_back(parse_spec(m, cfg.design.max_dose(), where + ".models"));
  }
  if (j.contains("data")) {
    std::filesystem::path p = get_field<std::string>(j, "data", where);
    cfg.data = p.is_absolute() ? p : source.parent_path() / p;
  }
  if (j.contains("test")) {
    const auto& t = j.at("test");
    const std::string tw = where + ".test";
    check_keys(t, {"delta", "alphas", "B", "seed", "target", "max_failure_fraction"}, tw);
    TestConfig tc;
    tc.delta = get_field<double>(t, "delta", tw, tc.delta);
    tc.alphas = get_field<std::vector<double>>(t, "alphas", tw, tc.alphas);
    tc.B = get_field<int>(t, "B", tw, tc.B);
    tc.seed = get_field<std::uint64_t>(t, "seed", tw, tc.seed);
    tc.max_failure_fraction = get_field<double>(t, "max_failure_fraction", tw, tc.max_failure_fraction);
    tc.target = parse_target(get_field<json>(t, "target", tw), cfg.design, true, tw + ".target");
    tc.validate(k);
    cfg.test = tc;
  }
  if (j.contains("calibrate")) {
    const auto& c = j.at("calibrate");
    check_keys(c, {"grid"}, where + ".calibrate");
    cfg.grid = parse_grid(get_field<json>(c, "grid", where + ".calibrate"), where + ".calibrate.grid");
  }
  return cfg;
}

AsympConfig parse_asymp_config(const json& j, const std::filesystem::path& source) {
  const std::string where = source.filename().string();
  check_keys(j, {"schema_version", "design", "models", "sigma2", "target", "draws", "seed", "quantiles",
                 "include_samples"},
             where);
  check_schema_version(j, where);
  AsympConfig cfg{parse_design(get_field<json>(j, "design", where), where + ".design"), {}, {}, {}};
  const int k = cfg.design.num_subgroups();
  const auto models = get_field<json>(j, "models", where);
  if (!models.is_array() || static_cast<int>(models.size()) != k) {
    throw ConfigError(fmt::format("{}.models: expected an array of {} curves", where, k));
  }
  for (const auto& m : models) {
    check_keys(m, {"family", "hill", "bounds", "params"}, where + ".models");
    auto spec = parse_spec(m, cfg.design.max_dose(), where + ".models");
    try {
      cfg.models.emplace_back(spec, get_field<std::vector<double>>(m, "params", where + ".models"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ".models: " + e.what());
    }
  }
  cfg.sigma2 = get_field<std::vector<double>>(j, "sigma2", where);
  if (static_cast<int>(cfg.sigma2.size()) != k) throw ConfigError(where + ": sigma2 needs one entry per subgroup");
  for (double s : cfg.sigma2) {
    if (!(s > 0.0)) throw ConfigError(where + ": sigma2 entries must be positive");
  }
  cfg.target = parse_target(get_field<json>(j, "target", where), cfg.design, false, where + ".target");
  cfg.draws = get_field<int>(j, "draws", where, cfg.draws);
  if (cfg.draws < 1) throw ConfigError(where + ": draws must be positive");
  cfg.seed = get_field<std::uint64_t>(j, "seed", where, cfg.seed);
  cfg.quantiles = get_field<std::vector<double>>(j, "quantiles", where, cfg.quantiles);
  for (double q : cfg.quantiles) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError(where + ": quantile levels must lie in (0, 1)");
  }
  cfg.include_samples = get_field<bool>(j, "include_samples", where, false);
  return cfg;
}

std::string timestamp_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

}  // namespace mrct::cli
