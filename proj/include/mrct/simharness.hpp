#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrct/bootstrap.hpp"
#include "mrct/design.hpp"
#include "mrct/model.hpp"

namespace mrct {

/// Subgroup sizes: balanced 150/150/150 or 66/192/192 out of n = 450.
enum class SubgroupSizes { Balanced, Unbalanced };
/// Patients per dose within a subgroup: equal, or more at placebo and top dose.
enum class DoseAllocation { Equal, Unequal };

/// Six doses 0..150 mg, weights (0.1, 0.3, 0.6) and the chosen allocation.
StudyDesign standard_design(SubgroupSizes sizes, DoseAllocation allocation);

struct ScenarioRow {
  std::string label;
  EmaxParams subgroup1;  // true curve of the varied first subgroup
  std::optional<double> printed_distance;
};

/// One table column: true curves, design and test kind.
struct Scenario {
  std::string name;
  int table = 0;
  std::vector<EmaxParams> others;  // true curves of subgroups 2..k
  std::vector<ScenarioRow> rows;
  SubgroupSizes sizes = SubgroupSizes::Balanced;
  DoseAllocation allocation = DoseAllocation::Equal;
  double sigma = 0.1;
  /// Hill coefficients known (three-parameter fits at the true h).
  bool fixed_hill = false;
  /// One: subgroup 1 against the population. Many: all subgroups at once.
  TargetKind kind = TargetKind::One;

  StudyDesign design() const;
  std::vector<DoseResponseModel> truth(std::size_t row) const;
  std::vector<ModelSpec> specs(std::size_t row) const;
  Target target() const;
  std::string column_name() const;
};

/// Reads a scenario file; each listed column (and Hill variant) becomes one Scenario.
std::vector<Scenario> load_scenarios(const std::filesystem::path& path);

struct SimOptions {
  int nsim = 500;
  int B = 300;
  double alpha = 0.1;
  double delta = 0.1;
  std::uint64_t seed = 1;
  int workers = 1;
  /// Multiplies every cell count of the design.
  int scale = 1;
  /// Row indices to run; all rows when empty.
  std::vector<int> rows;
  /// Largest tolerated share of simulated datasets whose test failed.
  double max_failure_fraction = 0.01;
};

struct SimRow {
  std::string label;
  EmaxParams subgroup1;
  double true_distance = 0.0;
  std::optional<double> printed_distance;
  int nsim = 0;
  int B = 0;
  int rejections = 0;
  int failures = 0;  // datasets whose test raised an error
  long failed_replicates = 0;  // bootstrap refits that did not converge, summed
  double rejection_rate = 0.0;
  double mc_se = 0.0;
  double runtime_seconds = 0.0;
};

struct SimResult {
  Scenario scenario;
  SimOptions options;
  std::vector<SimRow> rows;
  /// Rejection rate ordered alternative >= boundary >= interior null.
  bool monotone = true;
};

/// Simulates the rejection probability of the configured test for each row.
/// Dataset s of row r uses the stream stream_seed(seed, r, s).
SimResult run_scenario(const Scenario& scenario, const SimOptions& opts);

/// Checks that the row closest to d = 0 rejects at least as often as the
/// row closest to the threshold, which rejects at least as often as the
/// farthest row (rows in [0, delta) vs (delta, inf) only).
bool rejection_monotone(const std::vector<SimRow>& rows, double delta);

/// Machine-readable table; runtimes are left out so reruns compare byte for byte.
std::string emit_csv(const std::vector<SimResult>& results);
/// Aligned text table in the row order of the scenario file.
std::string emit_text(const std::vector<SimResult>& results);

}  // namespace mrct
