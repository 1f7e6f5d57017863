// mrct: equivalence tests of subgroup and population dose-response curves.
//
// Exit codes: 0 success, 1 internal error, 2 configuration error, 3 data
// error, 4 optimizer failure, 5 too many failed bootstrap refits.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "config.hpp"
#include "mrct/asymptotics.hpp"
#include "mrct/bootstrap.hpp"
#include "mrct/error.hpp"
#include "mrct/estimate.hpp"
#include "mrct/parallel.hpp"
#include "mrct/rng.hpp"
#include "mrct/simharness.hpp"

namespace fs = std::filesystem;
using namespace mrct;
using namespace mrct::cli;

namespace {

struct Common {
  std::string config;
  std::string data;
  std::string out;
  int workers = 0;
  std::optional<std::uint64_t> seed;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// NaN and infinities are not JSON; they are written as null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json header(const char* command) {
  return {{"schema_version", 1}, {"command", command}, {"timestamp", timestamp_now()}};
}

json extremal_json(const std::vector<ExtremalPoint>& points, const StudyDesign& design) {
  json arr = json::array();
  for (const auto& p : points) arr.push_back({{"subgroup", design.label(p.subgroup)}, {"dose", p.dose}, {"sign", p.sign}});
  return arr;
}

json models_json(const std::vector<DoseResponseModel>& models, std::span<const double> sigma2,
                 const StudyDesign& design) {
  json arr = json::array();
  for (std::size_t l = 0; l < models.size(); ++l) {
    const auto& m = models[l];
    json params = json::object();
    auto names = m.spec().param_names();
    for (int i = 0; i < m.num_params(); ++i) params[names[i]] = m.params()[i];
    json entry = {{"subgroup", design.label(static_cast<int>(l))}, {"family", family_name(m.family())}, {"params", params}};
    if (m.family() == Family::EmaxFixedHill) entry["hill"] = m.spec().fixed_hill;
    if (!sigma2.empty()) entry["sigma2"] = sigma2[l];
    arr.push_back(std::move(entry));
  }
  return arr;
}

json target_json(const Target& t, const StudyDesign& design) {
  json subs = json::array();
  for (int i : t.subgroups) subs.push_back(design.label(i));
  return {{"kind", target_kind_name(t.kind)}, {"subgroups", subs}};
}

json test_json(const TestResult& r, const StudyDesign& design, const TestConfig& cfg) {
  json levels = json::array();
  for (const auto& l : r.levels) levels.push_back({{"alpha", l.alpha}, {"quantile", num(l.quantile)}, {"reject", l.reject}});
  json fit = models_json(r.fit.models, r.fit.sigma2, design);
  for (std::size_t l = 0; l < fit.size(); ++l) fit[l]["converged"] = static_cast<bool>(r.fit.converged[l]);
  json constrained = {{"active", r.constrained.active},
                      {"constraint_residual", r.constrained.constraint_residual},
                      {"loglik", r.constrained.loglik},
                      {"models", models_json(r.constrained.beta_hathat, r.constrained.sigma2, design)}};
  return {{"target", target_json(r.target, design)},
          {"delta", r.delta},
          {"statistic", r.statistic},
          {"extremal_points", extremal_json(r.statistic_detail.argmax_points, design)},
          {"p_value", r.p_value},
          {"levels", levels},
          {"reject", r.reject},
          {"fit", {{"loglik", r.fit.loglik}, {"models", fit}}},
          {"constrained", constrained},
          {"bootstrap",
           {{"B", cfg.B},
            {"seed", cfg.seed},
            {"rng", kRngName},
            {"failed_replicates", r.failed_replicates},
            {"replicates", r.distribution.values}}}};
}

struct Loaded {
  StudyConfig cfg;
  std::vector<CellSummary> cells;
};

Loaded load_study(const Common& c, bool need_test) {
  if (c.config.empty()) throw ConfigError("--config is required");
  Loaded l{parse_study_config(read_json(c.config), c.config), {}};
  fs::path data = !c.data.empty() ? fs::path(c.data) : l.cfg.data.value_or(fs::path());
  if (data.empty()) throw ConfigError("no data file: pass --data or set \"data\" in the config");
  l.cells = summarize(load_csv(data, l.cfg.design), l.cfg.design);
  if (need_test) {
    if (!l.cfg.test) throw ConfigError("the config has no \"test\" section");
    if (c.seed) l.cfg.test->seed = *c.seed;
    l.cfg.test->workers = c.workers;
  }
  return l;
}

void require_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
}

int cmd_fit(const Common& c) {
  require_out(c);
  auto [cfg, cells] = load_study(c, false);
  auto fit = fit_mle(cells, cfg.specs);
  require_converged(fit);
  const auto& design = cfg.design;
  const auto range = dose_range(design);
  json out = header("fit");
  out["loglik"] = fit.loglik;
  json models = models_json(fit.models, fit.sigma2, design);
  for (std::size_t l = 0; l < models.size(); ++l) {
    models[l]["converged"] = static_cast<bool>(fit.converged[l]);
    models[l]["iterations"] = fit.iterations[l];
  }
  out["models"] = models;
  std::vector<double> grid(101);
  for (int i = 0; i <= 100; ++i) grid[i] = range.lo + (range.hi - range.lo) * i / 100.0;
  PopulationCurve pop(fit.models, design.weights());
  json curves = json::object();
  for (int l = 0; l < design.num_subgroups(); ++l) {
    std::vector<double> v;
    for (double d : grid) v.push_back(fit.models[l].evaluate(d));
    curves[design.label(l)] = v;
  }
  std::vector<double> pv;
  for (double d : grid) pv.push_back(pop.evaluate(d));
  curves["population"] = pv;
  out["curve_grid"] = grid;
  out["curves"] = curves;
  json distances = json::array();
  for (int l = 0; l < design.num_subgroups(); ++l) {
    auto d = d_inf(fit.models, design.weights(), l, range);
    distances.push_back({{"subgroup", design.label(l)}, {"d_inf", d.value}, {"extremal_points", extremal_json(d.argmax_points, design)}});
  }
  out["distances"] = distances;
  write_json(c.out, out);
  return 0;
}

int cmd_test(const Common& c) {
  require_out(c);
  auto [cfg, cells] = load_study(c, true);
  const auto& tc = *cfg.test;
  json out = header("test");
  if (tc.target.kind == TargetKind::IntersectionUnion) {
    auto r = test_many_iu(cells, cfg.design, cfg.specs, tc);
    json comps = json::array();
    for (const auto& comp : r.components) comps.push_back(test_json(comp, cfg.design, tc));
    json levels = json::array();
    for (const auto& l : r.levels) levels.push_back({{"alpha", l.alpha}, {"reject", l.reject}});
    out["target"] = target_json(tc.target, cfg.design);
    out["delta"] = tc.delta;
    out["p_value"] = r.p_value;
    out["levels"] = levels;
    out["reject"] = r.reject;
    out["components"] = comps;
  } else {
    auto r = test_many(cells, cfg.design, cfg.specs, tc);
    out.update(test_json(r, cfg.design, tc));
  }
  write_json(c.out, out);
  return 0;
}

int cmd_calibrate(const Common& c) {
  require_out(c);
  auto [cfg, cells] = load_study(c, true);
  if (cfg.grid.empty()) throw ConfigError("the config has no \"calibrate\" grid");
  auto r = calibrate_delta(cells, cfg.design, cfg.specs, *cfg.test, cfg.grid);
  std::string csv = "delta,p_value,quantile,reject,constrained\n";
  for (const auto& p : r.curve) {
    csv += fmt::format("{},{},{},{},{}\n", format_number(p.delta), format_number(p.p_value),
                       std::isfinite(p.quantile) ? format_number(p.quantile) : "", p.reject ? 1 : 0, p.constrained ? 1 : 0);
  }
  const fs::path out_path(c.out);
  write_text(out_path, csv);
  json summary = header("calibrate");
  summary["target"] = target_json(cfg.test->target, cfg.design);
  summary["alpha"] = r.alpha;
  summary["statistic"] = r.statistic;
  summary["delta_hat"] = r.delta_hat ? json(*r.delta_hat) : json(nullptr);
  summary["grid_size"] = r.curve.size();
  summary["quantile_violations"] = r.quantile_violations;
  summary["decision_violations"] = r.decision_violations;
  summary["B"] = cfg.test->B;
  summary["seed"] = cfg.test->seed;
  summary["rng"] = kRngName;
  summary["curve_file"] = out_path.filename().string();
  write_json(fs::path(out_path).replace_extension(".json"), summary);
  return 0;
}

struct SimFlags {
  std::optional<int> nsim, B, scale;
  std::optional<double> alpha, delta;
  std::vector<int> rows;
  std::vector<int> columns;
};

int cmd_simulate(const Common& c, const SimFlags& f) {
  require_out(c);
  if (c.config.empty()) throw ConfigError("--config is required");
  auto scenarios = load_scenarios(c.config);
  SimOptions opts;
  if (f.nsim) opts.nsim = *f.nsim;
  if (f.B) opts.B = *f.B;
  if (f.scale) opts.scale = *f.scale;
  if (f.alpha) opts.alpha = *f.alpha;
  if (f.delta) opts.delta = *f.delta;
  if (c.seed) opts.seed = *c.seed;
  opts.workers = c.workers;
  opts.rows = f.rows;
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0) || !(opts.delta > 0.0)) throw ConfigError("need 0 < alpha < 1 and delta > 0");

  std::vector<SimResult> results;
  json runtimes = json::array();
  for (std::size_t col = 0; col < scenarios.size(); ++col) {
    if (!f.columns.empty() && std::find(f.columns.begin(), f.columns.end(), static_cast<int>(col)) == f.columns.end()) {
      continue;
    }
    results.push_back(run_scenario(scenarios[col], opts));
    if (!results.back().monotone) {
      std::cerr << "warning: " << scenarios[col].column_name() << ": rejection rates not ordered by distance\n";
    }
    for (const auto& row : results.back().rows) {
      runtimes.push_back({{"column", scenarios[col].column_name()}, {"row", row.label}, {"seconds", row.runtime_seconds}});
    }
  }
  const fs::path out_path(c.out);
  write_text(out_path, emit_csv(results));
  write_text(fs::path(out_path).replace_extension(".txt"), emit_text(results));
  json meta = header("simulate");
  meta["scenario_file"] = fs::path(c.config).filename().string();
  meta["nsim"] = opts.nsim;
  meta["B"] = opts.B;
  meta["alpha"] = opts.alpha;
  meta["delta"] = opts.delta;
  meta["seed"] = opts.seed;
  meta["scale"] = opts.scale;
  meta["rng"] = kRngName;
  meta["workers"] = opts.workers;
  meta["runtimes"] = runtimes;
  write_json(fs::path(out_path).replace_extension(".meta.json"), meta);
  return 0;
}

int cmd_asymp(const Common& c) {
  require_out(c);
  if (c.config.empty()) throw ConfigError("--config is required");
  auto cfg = parse_asymp_config(read_json(c.config), c.config);
  if (c.seed) cfg.seed = *c.seed;
  auto asym = AsymptoticModel::from_design(cfg.design, cfg.models, cfg.sigma2);
  SampleOptions so;
  so.workers = c.workers;
  auto s = sample_S(asym, cfg.target.subgroups, cfg.draws, cfg.seed, so);
  std::vector<double> sorted = s.values;
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0, var = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(sorted.size());
  for (double v : sorted) var += (v - mean) * (v - mean);
  var /= static_cast<double>(sorted.size());
  json quantiles = json::array();
  for (double q : cfg.quantiles) {
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size()) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    quantiles.push_back({{"level", q}, {"value", sorted[rank - 1]}});
  }
  json out = header("asymp");
  out["target"] = target_json(cfg.target, cfg.design);
  out["statistic"] = cfg.target.kind == TargetKind::One ? "T" : "S";
  out["distance"] = s.distance;
  out["extremal_points"] = extremal_json(s.extremal, cfg.design);
  out["multi_point_extremal_set"] = s.multi_point;
  if (s.multi_point) out["note"] = "more than one extremal point; continuity of the limit law is assumed";
  out["draws"] = cfg.draws;
  out["seed"] = cfg.seed;
  out["rng"] = kRngName;
  out["mean"] = mean;
  out["variance"] = var;
  out["quantiles"] = quantiles;
  if (cfg.include_samples) out["samples"] = s.values;
  write_json(c.out, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivalence tests of subgroup and population dose-response curves"};
  app.require_subcommand(1);
  Common common;
  common.workers = default_workers();
  SimFlags sim;

  auto add_common = [&](CLI::App* sub, bool data) {
    sub->add_option("--config", common.config, "JSON config file")->required();
    if (data) sub->add_option("--data", common.data, "CSV with columns subgroup,dose,response");
    sub->add_option("--out", common.out, "output file")->required();
    sub->add_option("--workers", common.workers, "worker threads (default: MRCT_WORKERS or all cores)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", common.seed, "overrides the seed in the config");
  };
  auto* fit = app.add_subcommand("fit", "maximum-likelihood fit of every subgroup");
  add_common(fit, true);
  auto* test = app.add_subcommand("test", "constrained parametric bootstrap equivalence test");
  add_common(test, true);
  auto* cal = app.add_subcommand("calibrate", "p-value and decision over a grid of thresholds");
  add_common(cal, true);
  auto* simulate = app.add_subcommand("simulate", "rejection probabilities for a scenario file");
  add_common(simulate, false);
  simulate->add_option("--nsim", sim.nsim, "simulated datasets per row (default 500)");
  simulate->add_option("--B", sim.B, "bootstrap replicates per test (default 300)");
  simulate->add_option("--alpha", sim.alpha, "significance level (default 0.1)");
  simulate->add_option("--delta", sim.delta, "equivalence threshold (default 0.1)");
  simulate->add_option("--scale", sim.scale, "multiply every cell count");
  simulate->add_option("--rows", sim.rows, "0-based rows to run (default all)");
  simulate->add_option("--columns", sim.columns, "0-based scenario columns to run (default all)");
  auto* asymp = app.add_subcommand("asymp", "samples of the limit statistic T or S");
  add_common(asymp, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*fit) return cmd_fit(common);
    if (*test) return cmd_test(common);
    if (*cal) return cmd_calibrate(common);
    if (*simulate) return cmd_simulate(common, sim);
    if (*asymp) return cmd_asymp(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
