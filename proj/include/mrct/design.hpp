#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrct/model.hpp"

namespace mrct {

/// Trial layout: r dose levels (placebo first), k subgroups, per-cell patient
/// counts and the known population shares of the subgroups.
class StudyDesign {
 public:
  /// allocations[l][j] = number of patients of subgroup l at dose j.
  /// Throws DataError when an invariant is violated.
  StudyDesign(std::vector<double> doses, std::vector<std::vector<int>> allocations, std::vector<double> weights,
              std::vector<std::string> labels = {});

  int num_doses() const { return static_cast<int>(doses_.size()); }
  int num_subgroups() const { return static_cast<int>(allocations_.size()); }
  std::span<const double> doses() const { return doses_; }
  double max_dose() const { return doses_.back(); }
  int count(int subgroup, int dose) const { return allocations_[subgroup][dose]; }
  const std::vector<std::vector<int>>& allocations() const { return allocations_; }
  int subgroup_size(int subgroup) const;
  int total_size() const;
  std::span<const double> weights() const { return weights_; }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Label of a subgroup, falling back to its 1-based index.
  std::string label(int subgroup) const;
  /// 0-based index of a subgroup given its label or 1-based index string.
  std::optional<int> find_subgroup(const std::string& key) const;
  /// Index of a dose value, exact match.
  std::optional<int> find_dose(double dose) const;

  /// Same doses and weights with every cell count multiplied by `factor`.
  StudyDesign scaled(int factor) const;

 private:
  std::vector<double> doses_;
  std::vector<std::vector<int>> allocations_;
  std::vector<double> weights_;
  std::vector<std::string> labels_;
};

struct Record {
  int subgroup;    // 0-based
  int dose_index;  // 0-based into StudyDesign::doses()
  double response;
};

/// Observations Y_lij. Immutable after construction.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Record> records);

  std::span<const Record> records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// Throws DataError listing every cell whose count differs from the design.
  void validate(const StudyDesign& design) const;

 private:
  std::vector<Record> records_;
};

/// sigma^2 per subgroup, all strictly positive. Zero is admitted only by
/// generate() for noiseless data.
struct GroupVariances {
  std::vector<double> sigma2;
};

/// Per-cell summary of a dataset: counts, means and within-cell sums of
/// squares. The Gaussian likelihood depends on the data only through these.
struct CellSummary {
  std::vector<double> doses;
  std::vector<int> count;
  std::vector<double> mean;
  double within_ss = 0.0;  // sum over cells of sum_i (y - cell mean)^2
  int n = 0;

  /// Sum of squared residuals of a curve: within_ss + sum_j n_j (mean_j - mu_j)^2.
  double sse(const ModelSpec& spec, std::span<const double> params) const;
};

std::vector<CellSummary> summarize(const Dataset& data, const StudyDesign& design);

/// Reads a `subgroup,dose,response` CSV (1-based subgroups) and validates it.
Dataset load_csv(const std::filesystem::path& path, const StudyDesign& design);
/// Parses CSV text; `source` names the input in error messages.
Dataset parse_csv(const std::string& text, const StudyDesign& design, const std::string& source = "<input>");
/// Writes LF-terminated CSV with round-trip exact numbers.
void save_csv(const std::filesystem::path& path, const Dataset& data, const StudyDesign& design);
std::string to_csv(const Dataset& data, const StudyDesign& design);

/// Y_lij = mu_l(d_j) + sigma_l * z in (subgroup, dose, patient) order, with z
/// drawn from the stream `seed`.
Dataset generate(const StudyDesign& design, std::span<const DoseResponseModel> models,
                 const GroupVariances& variances, std::uint64_t seed);

/// Same as generate() but directly into cell summaries (no record storage).
std::vector<CellSummary> generate_summary(const StudyDesign& design, std::span<const DoseResponseModel> models,
                                          std::span<const double> sigma2, std::uint64_t seed);

/// Decimal rendering used for CSV and JSON echoes (shortest round-trip form).
std::string format_number(double v);

}  // namespace mrct
