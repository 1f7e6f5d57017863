#include "mrct/simharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mrct/error.hpp"
#include "mrct/json_util.hpp"
#include "mrct/parallel.hpp"
#include "mrct/rng.hpp"

namespace mrct {

namespace {

constexpr double kMaxDose = 150.0;

std::string_view sizes_name(SubgroupSizes s) { return s == SubgroupSizes::Balanced ? "balanced" : "unbalanced"; }
std::string_view allocation_name(DoseAllocation a) { return a == DoseAllocation::Equal ? "equal" : "unequal"; }

EmaxParams parse_params(const json& j, std::string_view where) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(std::string(where) + ": expected [e0, emax, ed50, h]");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + ": parameters must be numbers");
  }
}

std::string fmt_opt(const std::optional<double>& v, const char* spec) {
  return v ? fmt::format(fmt::runtime(spec), *v) : std::string();
}

}  // namespace

StudyDesign standard_design(SubgroupSizes sizes, DoseAllocation allocation) {
  std::vector<std::vector<int>> counts;
  if (sizes == SubgroupSizes::Balanced) {
    std::vector<int> row = allocation == DoseAllocation::Equal ? std::vector<int>(6, 25)
                                                              : std::vector<int>{35, 20, 20, 20, 20, 35};
    counts = {row, row, row};
  } else if (allocation == DoseAllocation::Equal) {
    counts = {std::vector<int>(6, 11), std::vector<int>(6, 32), std::vector<int>(6, 32)};
  } else {
    std::vector<int> big{46, 25, 25, 25, 25, 46};
    counts = {{15, 9, 9, 9, 9, 15}, big, big};
  }
  return StudyDesign({0, 10, 25, 50, 100, 150}, std::move(counts), {0.1, 0.3, 0.6});
}

StudyDesign Scenario::design() const { return standard_design(sizes, allocation); }

std::vector<DoseResponseModel> Scenario::truth(std::size_t row) const {
  std::vector<DoseResponseModel> out{DoseResponseModel::emax(rows.at(row).subgroup1, kMaxDose)};
  for (const auto& p : others) out.push_back(DoseResponseModel::emax(p, kMaxDose));
  return out;
}

std::vector<ModelSpec> Scenario::specs(std::size_t row) const {
  std::vector<ModelSpec> out;
  auto add = [&](const EmaxParams& p) {
    out.push_back(fixed_hill ? ModelSpec::defaults(Family::EmaxFixedHill, kMaxDose, p.h)
                             : ModelSpec::defaults(Family::EmaxFull, kMaxDose));
  };
  add(rows.at(row).subgroup1);
  for (const auto& p : others) add(p);
  return out;
}

Target Scenario::target() const {
  if (kind == TargetKind::One) return Target::one(0);
  std::vector<int> all(others.size() + 1);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return Target::many(std::move(all));
}

std::string Scenario::column_name() const {
  return fmt::format("{}/{}/{}{}", name, sizes_name(sizes), allocation_name(allocation), fixed_hill ? "/fixed-h" : "");
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const std::string where = path.filename().string();
  check_keys(j, {"schema_version", "name", "table", "kind", "sigma", "others", "rows", "columns", "fixed_hill"}, where);
  check_schema_version(j, where);

  Scenario base;
  base.name = get_field<std::string>(j, "name", where);
  base.table = get_field<int>(j, "table", where, 0);
  base.sigma = get_field<double>(j, "sigma", where, 0.1);
  if (!(base.sigma > 0.0)) throw ConfigError(where + ": sigma must be positive");
  const auto kind = get_field<std::string>(j, "kind", where, "one");
  if (kind == "one") base.kind = TargetKind::One;
  else if (kind == "many") base.kind = TargetKind::Many;
  else throw ConfigError(where + ": kind must be 'one' or 'many'");

  for (const auto& o : get_field<json>(j, "others", where)) base.others.push_back(parse_params(o, where + ".others"));
  if (base.others.size() != 2) throw ConfigError(where + ": the standard designs have three subgroups");
  for (const auto& r : get_field<json>(j, "rows", where)) {
    check_keys(r, {"label", "params", "printed_distance"}, where + ".rows");
    ScenarioRow row;
    row.subgroup1 = parse_params(get_field<json>(r, "params", where + ".rows"), where + ".rows");
    row.label = get_field<std::string>(r, "label", where + ".rows", "");
    if (r.contains("printed_distance")) row.printed_distance = get_field<double>(r, "printed_distance", where);
    base.rows.push_back(std::move(row));
  }
  if (base.rows.empty()) throw ConfigError(where + ": no rows");

  std::vector<bool> hill_variants{false};
  if (j.contains("fixed_hill")) hill_variants = get_field<std::vector<bool>>(j, "fixed_hill", where);

  std::vector<Scenario> out;
  auto columns = get_field<json>(j, "columns", where);
  if (!columns.is_array() || columns.empty()) throw ConfigError(where + ": columns must be a non-empty array");
  for (bool fixed : hill_variants) {
    for (const auto& c : columns) {
      check_keys(c, {"sizes", "allocation"}, where + ".columns");
      Scenario s = base;
      s.fixed_hill = fixed;
      const auto sizes = get_field<std::string>(c, "sizes", where);
      const auto alloc = get_field<std::string>(c, "allocation", where);
      if (sizes == "balanced") s.sizes = SubgroupSizes::Balanced;
      else if (sizes == "unbalanced") s.sizes = SubgroupSizes::Unbalanced;
      else throw ConfigError(where + ": sizes must be 'balanced' or 'unbalanced'");
      if (alloc == "equal") s.allocation = DoseAllocation::Equal;
      else if (alloc == "unequal") s.allocation = DoseAllocation::Unequal;
      else throw ConfigError(where + ": allocation must be 'equal' or 'unequal'");
      out.push_back(std::move(s));
    }
  }
  return out;
}

SimResult run_scenario(const Scenario& scenario, const SimOptions& opts) {
  if (opts.nsim < 1 || opts.B < 1) throw ConfigError("nsim and B must be at least 1");
  if (opts.scale < 1) throw ConfigError("design scale must be at least 1");
  SimResult result{scenario, opts, {}, true};
  const StudyDesign design = scenario.design().scaled(opts.scale);
  const auto range = dose_range(design);
  const std::vector<double> sigma2(design.num_subgroups(), scenario.sigma * scenario.sigma);
  const Target target = scenario.target();

  std::vector<int> rows = opts.rows;
  if (rows.empty()) {
    for (std::size_t r = 0; r < scenario.rows.size(); ++r) rows.push_back(static_cast<int>(r));
  }
  for (int r : rows) {
    if (r < 0 || r >= static_cast<int>(scenario.rows.size())) throw ConfigError(fmt::format("no row {}", r));
    const auto t0 = std::chrono::steady_clock::now();
    const auto truth = scenario.truth(r);
    const auto specs = scenario.specs(r);

    SimRow row;
    row.label = scenario.rows[r].label;
    row.subgroup1 = scenario.rows[r].subgroup1;
    row.printed_distance = scenario.rows[r].printed_distance;
    row.true_distance = d_inf_inf(truth, design.weights(), target.subgroups, range).value;
    row.nsim = opts.nsim;
    row.B = opts.B;

    TestConfig config;
    config.delta = opts.delta;
    config.alphas = {opts.alpha};
    config.B = opts.B;
    config.target = target;
    config.workers = 1;

    // 1 = reject, 0 = accept, -1 = failed
    std::vector<signed char> outcome(opts.nsim, 0);
    std::vector<int> failed_reps(opts.nsim, 0);
    parallel_for(static_cast<std::size_t>(opts.nsim), opts.workers, [&](std::size_t s) {
      const auto data_seed = stream_seed(opts.seed, r, s);
      auto cells = generate_summary(design, truth, sigma2, data_seed);
      TestConfig c = config;
      c.seed = stream_seed(data_seed, 1);
      try {
        auto res = test_many(cells, design, specs, c);
        outcome[s] = res.reject ? 1 : 0;
        failed_reps[s] = res.failed_replicates;
      } catch (const ConvergenceError&) {
        outcome[s] = -1;
      } catch (const BootstrapError&) {
        outcome[s] = -1;
      }
    });
    row.rejections = static_cast<int>(std::count(outcome.begin(), outcome.end(), 1));
    row.failures = static_cast<int>(std::count(outcome.begin(), outcome.end(), -1));
    for (int f : failed_reps) row.failed_replicates += f;
    if (row.failures > opts.max_failure_fraction * opts.nsim) {
      throw BootstrapError(fmt::format("{} row {} ({}): {} of {} simulated tests failed", scenario.column_name(), r,
                                       row.label, row.failures, opts.nsim));
    }
    const int used = opts.nsim - row.failures;
    row.rejection_rate = used > 0 ? static_cast<double>(row.rejections) / used : 0.0;
    row.mc_se = used > 0 ? std::sqrt(row.rejection_rate * (1.0 - row.rejection_rate) / used) : 0.0;
    row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rows.push_back(std::move(row));
  }
  result.monotone = rejection_monotone(result.rows, opts.delta);
  return result;
}

bool rejection_monotone(const std::vector<SimRow>& rows, double delta) {
  if (rows.size() < 2) return true;
  auto by_distance = [](const SimRow& a, const SimRow& b) { return a.true_distance < b.true_distance; };
  auto by_gap = [delta](const SimRow& a, const SimRow& b) {
    return std::abs(a.true_distance - delta) < std::abs(b.true_distance - delta);
  };
  const auto& closest_zero = *std::min_element(rows.begin(), rows.end(), by_distance);
  const auto& farthest = *std::max_element(rows.begin(), rows.end(), by_distance);
  const auto& boundary = *std::min_element(rows.begin(), rows.end(), by_gap);
  bool ok = true;
  if (closest_zero.true_distance < delta) ok = ok && closest_zero.rejection_rate >= boundary.rejection_rate;
  if (farthest.true_distance > delta) ok = ok && boundary.rejection_rate >= farthest.rejection_rate;
  return ok;
}

std::string emit_csv(const std::vector<SimResult>& results) {
  std::ostringstream out;
  out << "scenario,table,kind,sizes,allocation,fixed_hill,row,label,e0,emax,ed50,h,true_distance,printed_distance,"
         "nsim,B,alpha,delta,seed,rejections,failures,failed_replicates,rejection_rate,mc_se\n";
  for (const auto& res : results) {
    const auto& sc = res.scenario;
    for (std::size_t r = 0; r < res.rows.size(); ++r) {
      const auto& row = res.rows[r];
      out << fmt::format("{},{},{},{},{},{},{},\"{}\",{},{},{},{},{:.6f},{},{},{},{},{},{},{},{},{},{:.6f},{:.6f}\n",
                         sc.name, sc.table, target_kind_name(sc.kind), sizes_name(sc.sizes),
                         allocation_name(sc.allocation), sc.fixed_hill ? 1 : 0, r, row.label,
                         format_number(row.subgroup1.e0), format_number(row.subgroup1.emax),
                         format_number(row.subgroup1.ed50), format_number(row.subgroup1.h), row.true_distance,
                         fmt_opt(row.printed_distance, "{:.2f}"), row.nsim, row.B, format_number(res.options.alpha),
                         format_number(res.options.delta), res.options.seed, row.rejections, row.failures,
                         row.failed_replicates, row.rejection_rate, row.mc_se);
    }
  }
  return out.str();
}

std::string emit_text(const std::vector<SimResult>& results) {
  std::ostringstream out;
  for (const auto& res : results) {
    out << fmt::format("{}  (nsim={}, B={}, alpha={}, delta={})\n", res.scenario.column_name(), res.options.nsim,
                       res.options.B, res.options.alpha, res.options.delta);
    out << fmt::format("  {:<22} {:>8} {:>8} {:>9} {:>7}\n", "row", "d_true", "printed", "reject", "s.e.");
    for (const auto& row : res.rows) {
      out << fmt::format("  {:<22} {:>8.4f} {:>8} {:>9.3f} {:>7.3f}\n", row.label, row.true_distance,
                         fmt_opt(row.printed_distance, "{:.2f}"), row.rejection_rate, row.mc_se);
    }
    if (!res.monotone) out << "  warning: rejection rates are not ordered alternative >= boundary >= null\n";
    out << "\n";
  }
  return out.str();
}

}  // namespace mrct
