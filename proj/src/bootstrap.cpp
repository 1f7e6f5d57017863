#include "mrct/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mrct/error.hpp"
#include "mrct/parallel.hpp"
#include "mrct/rng.hpp"

namespace mrct {

std::string_view target_kind_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::One: return "one";
    case TargetKind::Many: return "many";
    case TargetKind::IntersectionUnion: return "iu";
  }
  return "unknown";
}

void TestConfig::validate(int num_subgroups) const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be positive");
  if (alphas.empty()) throw ConfigError("at least one significance level is required");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError(fmt::format("significance level {} outside (0, 1)", a));
  }
  if (B < 1) throw ConfigError("B must be at least 1");
  if (target.subgroups.empty()) throw ConfigError("the test target names no subgroup");
  for (int i : target.subgroups) {
    if (i < 0 || i >= num_subgroups) throw ConfigError(fmt::format("target subgroup {} does not exist", i + 1));
  }
  auto sorted = target.subgroups;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("target subgroups must be distinct");
  }
  if (target.kind == TargetKind::One && target.subgroups.size() != 1) {
    throw ConfigError("a one-subgroup test needs exactly one subgroup");
  }
}

BootstrapDistribution::BootstrapDistribution(std::vector<double> v) : values(std::move(v)), sorted(values) {
  std::sort(sorted.begin(), sorted.end());
}

double BootstrapDistribution::quantile(double alpha) const {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto B = static_cast<double>(sorted.size());
  // Guard the product against rounding just above an integer (e.g. 0.07 * 100).
  auto rank = static_cast<std::size_t>(std::ceil(alpha * B - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double BootstrapDistribution::p_value(double statistic) const {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  auto count = std::upper_bound(sorted.begin(), sorted.end(), statistic) - sorted.begin();
  return static_cast<double>(count) / static_cast<double>(sorted.size());
}

DoseRange dose_range(const StudyDesign& design) { return {design.doses().front(), design.max_dose()}; }

namespace {

// Steps (1)-(5) for either distance; `cells` already validated.
TestResult run_test(std::span<const CellSummary> cells, const StudyDesign& design, std::span<const ModelSpec> specs,
                    const TestConfig& config, const FitResult* precomputed_fit = nullptr) {
  const auto range = dose_range(design);
  const auto weights = design.weights();
  const auto& subgroups = config.target.subgroups;

  TestResult res;
  res.target = config.target;
  res.delta = config.delta;
  res.fit = precomputed_fit ? *precomputed_fit : fit_mle(cells, specs, config.fit);
  require_converged(res.fit);
  res.statistic_detail = d_inf_inf(res.fit.models, weights, subgroups, range, config.constrained.distance);
  res.statistic = res.statistic_detail.value;
  res.constrained =
      fit_constrained(cells, weights, res.fit, subgroups, range, config.delta, config.constrained);

  const auto& generator = res.constrained.beta_hathat;
  const auto& sigma2 = res.fit.sigma2;
  std::vector<double> values(config.B);
  std::vector<char> failed(config.B, 0);
  parallel_for(static_cast<std::size_t>(config.B), config.workers, [&](std::size_t b) {
    auto boot_cells = generate_summary(design, generator, sigma2, stream_seed(config.seed, b));
    auto boot_fit = fit_mle(boot_cells, specs, config.fit, generator);
    failed[b] = !boot_fit.all_converged();
    values[b] = d_inf_inf(boot_fit.models, weights, subgroups, range, config.constrained.distance).value;
  });
  res.failed_replicates = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
  if (res.failed_replicates > config.max_failure_fraction * config.B) {
    std::string which;
    for (int b = 0, shown = 0; b < config.B && shown < 10; ++b) {
      if (failed[b]) {
        which += (shown++ ? ", " : "") + std::to_string(b);
      }
    }
    throw BootstrapError(fmt::format("{} of {} bootstrap refits did not converge (replicates {}{})",
                                     res.failed_replicates, config.B, which,
                                     res.failed_replicates > 10 ? ", ..." : ""));
  }
  res.distribution = BootstrapDistribution(std::move(values));
  res.p_value = res.distribution.p_value(res.statistic);
  for (double alpha : config.alphas) {
    const double q = res.distribution.quantile(alpha);
    res.levels.push_back({alpha, q, res.statistic < q});
  }
  res.reject = res.levels.front().reject;
  return res;
}

std::vector<CellSummary> checked_cells(const Dataset& data, const StudyDesign& design) {
  data.validate(design);
  return summarize(data, design);
}

}  // namespace

TestResult test_one(std::span<const CellSummary> cells, const StudyDesign& design, std::span<const ModelSpec> specs,
                    const TestConfig& config) {
  config.validate(design.num_subgroups());
  if (config.target.kind != TargetKind::One) throw ConfigError("test_one needs a one-subgroup target");
  return run_test(cells, design, specs, config);
}

TestResult test_one(const Dataset& data, const StudyDesign& design, std::span<const ModelSpec> specs,
                    const TestConfig& config) {
  auto cells = checked_cells(data, design);
  return test_one(cells, design, specs, config);
}

TestResult test_many(std::span<const CellSummary> cells, const StudyDesign& design, std::span<const ModelSpec> specs,
                     const TestConfig& config) {
  config.validate(design.num_subgroups());
  if (config.target.kind == TargetKind::IntersectionUnion) {
    throw ConfigError("test_many needs a one- or many-subgroup target");
  }
  return run_test(cells, design, specs, config);
}

TestResult test_many(const Dataset& data, const StudyDesign& design, std::span<const ModelSpec> specs,
                     const TestConfig& config) {
  auto cells = checked_cells(data, design);
  return test_many(cells, design, specs, config);
}

IntersectionUnionResult test_many_iu(std::span<const CellSummary> cells, const StudyDesign& design,
                                     std::span<const ModelSpec> specs, const TestConfig& config) {
  config.validate(design.num_subgroups());
  IntersectionUnionResult out;
  auto fit = fit_mle(cells, specs, config.fit);
  for (int i : config.target.subgroups) {
    TestConfig component = config;
    component.target = Target::one(i);
    out.components.push_back(run_test(cells, design, specs, component, &fit));
  }
  for (std::size_t a = 0; a < config.alphas.size(); ++a) {
    bool all = true;
    for (const auto& c : out.components) all = all && c.levels[a].reject;
    out.levels.push_back({config.alphas[a], std::numeric_limits<double>::quiet_NaN(), all});
  }
  for (const auto& c : out.components) out.p_value = std::max(out.p_value, c.p_value);
  out.reject = out.levels.front().reject;
  return out;
}

IntersectionUnionResult test_many_iu(const Dataset& data, const StudyDesign& design,
                                     std::span<const ModelSpec> specs, const TestConfig& config) {
  auto cells = checked_cells(data, design);
  return test_many_iu(cells, design, specs, config);
}

CalibrationResult calibrate_delta(std::span<const CellSummary> cells, const StudyDesign& design,
                                  std::span<const ModelSpec> specs, const TestConfig& config,
                                  std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("the threshold grid is empty");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!(grid[g] > 0.0)) throw ConfigError("threshold grid values must be positive");
    if (g > 0 && !(grid[g] > grid[g - 1])) throw ConfigError("threshold grid must be increasing");
  }
  TestConfig base = config;
  base.delta = grid.front();
  base.validate(design.num_subgroups());

  CalibrationResult out;
  out.alpha = config.alphas.front();
  auto fit = fit_mle(cells, specs, config.fit);
  for (double delta : grid) {
    TestConfig c = config;
    c.delta = delta;
    CalibrationPoint pt;
    pt.delta = delta;
    if (config.target.kind == TargetKind::IntersectionUnion) {
      double p = 0.0;
      bool all = true;
      bool any_constrained = false;
      for (int i : config.target.subgroups) {
        TestConfig component = c;
        component.target = Target::one(i);
        auto r = run_test(cells, design, specs, component, &fit);
        p = std::max(p, r.p_value);
        all = all && r.reject;
        any_constrained = any_constrained || r.constrained.active;
        out.statistic = std::max(out.statistic, r.statistic);
      }
      pt.p_value = p;
      pt.reject = all;
      pt.quantile = std::numeric_limits<double>::quiet_NaN();
      pt.constrained = any_constrained;
    } else {
      auto r = run_test(cells, design, specs, c, &fit);
      pt.p_value = r.p_value;
      pt.quantile = r.levels.front().quantile;
      pt.reject = r.reject;
      pt.constrained = r.constrained.active;
      out.statistic = r.statistic;
    }
    out.curve.push_back(pt);
  }
  bool seen_reject = false;
  for (std::size_t g = 0; g < out.curve.size(); ++g) {
    const auto& pt = out.curve[g];
    if (pt.reject && !out.delta_hat) out.delta_hat = pt.delta;
    if (seen_reject && !pt.reject) ++out.decision_violations;
    seen_reject = seen_reject || pt.reject;
    if (g > 0 && pt.quantile < out.curve[g - 1].quantile) ++out.quantile_violations;
  }
  return out;
}

}  // namespace mrct
