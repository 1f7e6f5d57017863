#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mrct/design.hpp"
#include "mrct/distance.hpp"
#include "mrct/estimate.hpp"

namespace mrct {

/// ONE: a single subgroup against the population (d_inf).
/// MANY: the largest deviation over a subgroup set (d_inf_inf).
/// INTERSECTION_UNION: one ONE-test per subgroup, reject only if all reject.
enum class TargetKind { One, Many, IntersectionUnion };

std::string_view target_kind_name(TargetKind kind);

struct Target {
  TargetKind kind = TargetKind::One;
  std::vector<int> subgroups;  // 0-based

  static Target one(int subgroup) { return {TargetKind::One, {subgroup}}; }
  static Target many(std::vector<int> subgroups) { return {TargetKind::Many, std::move(subgroups)}; }
  static Target intersection_union(std::vector<int> subgroups) {
    return {TargetKind::IntersectionUnion, std::move(subgroups)};
  }
};

struct TestConfig {
  double delta = 0.1;
  /// Levels at which decisions are reported; the first one is the primary level.
  std::vector<double> alphas{0.05};
  int B = 1000;
  std::uint64_t seed = 1;
  Target target;
  int workers = 1;
  /// Fraction of replicates allowed to fail their refit before aborting.
  double max_failure_fraction = 0.01;
  FitOptions fit;
  ConstrainedOptions constrained;

  /// Throws ConfigError when a field is out of range.
  void validate(int num_subgroups) const;
};

/// Bootstrap replicate statistics in replicate order plus a sorted copy.
struct BootstrapDistribution {
  std::vector<double> values;
  std::vector<double> sorted;

  explicit BootstrapDistribution(std::vector<double> v = {});

  /// Lower order statistic at rank ceil(alpha * B), 1-based.
  double quantile(double alpha) const;
  /// Share of replicates with value <= statistic.
  double p_value(double statistic) const;
};

struct LevelDecision {
  double alpha = 0.0;
  double quantile = 0.0;
  bool reject = false;
};

/// Outcome of a constrained parametric bootstrap test. With the quantile at
/// rank ceil(alpha * B), `statistic < quantile` holds exactly when
/// `p_value < alpha`.
struct TestResult {
  Target target;
  double delta = 0.0;
  double statistic = 0.0;
  DistanceResult statistic_detail;
  BootstrapDistribution distribution;
  double p_value = 0.0;
  std::vector<LevelDecision> levels;
  bool reject = false;  // at alphas.front()
  FitResult fit;
  ConstrainedFitResult constrained;
  int failed_replicates = 0;
};

/// Intersection-union summary: per-subgroup ONE tests at a common level.
struct IntersectionUnionResult {
  std::vector<TestResult> components;
  double p_value = 0.0;  // max of component p-values
  std::vector<LevelDecision> levels;  // quantile is NaN, reject iff all components reject
  bool reject = false;
};

DoseRange dose_range(const StudyDesign& design);

/// Algorithm for one subgroup: fit, constrain to the null boundary when the
/// statistic is below delta, resample B datasets from the constrained curves
/// with the unconstrained variances, refit and take the empirical quantile.
TestResult test_one(std::span<const CellSummary> cells, const StudyDesign& design, std::span<const ModelSpec> specs,
                    const TestConfig& config);
TestResult test_one(const Dataset& data, const StudyDesign& design, std::span<const ModelSpec> specs,
                    const TestConfig& config);

/// Same recipe on the maximal deviation over config.target.subgroups.
TestResult test_many(std::span<const CellSummary> cells, const StudyDesign& design, std::span<const ModelSpec> specs,
                     const TestConfig& config);
TestResult test_many(const Dataset& data, const StudyDesign& design, std::span<const ModelSpec> specs,
                     const TestConfig& config);

IntersectionUnionResult test_many_iu(std::span<const CellSummary> cells, const StudyDesign& design,
                                     std::span<const ModelSpec> specs, const TestConfig& config);
IntersectionUnionResult test_many_iu(const Dataset& data, const StudyDesign& design,
                                     std::span<const ModelSpec> specs, const TestConfig& config);

struct CalibrationPoint {
  double delta = 0.0;
  double p_value = 0.0;
  double quantile = 0.0;  // at the primary level
  bool reject = false;
  bool constrained = false;
};

struct CalibrationResult {
  std::vector<CalibrationPoint> curve;
  /// Smallest grid threshold with a rejection, if any.
  std::optional<double> delta_hat;
  double alpha = 0.0;
  double statistic = 0.0;
  /// Consecutive grid pairs whose quantiles decrease; 0 under common random numbers.
  int quantile_violations = 0;
  /// Grid points rejected although a smaller threshold was not, or vice versa.
  int decision_violations = 0;
};

/// Runs the configured test for every threshold in `grid` with the same seed.
/// The intersection-union target uses the largest component p-value.
CalibrationResult calibrate_delta(std::span<const CellSummary> cells, const StudyDesign& design,
                                  std::span<const ModelSpec> specs, const TestConfig& config,
                                  std::span<const double> grid);

}  // namespace mrct
