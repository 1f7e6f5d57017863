#pragma once

#include <span>
#include <vector>

#include "mrct/model.hpp"

namespace mrct {

struct DoseRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Weighted mixture of subgroup curves, the full-population response.
class PopulationCurve {
 public:
  /// Weights must be positive and sum to one.
  PopulationCurve(std::span<const DoseResponseModel> models, std::span<const double> weights);

  double evaluate(double d) const;
  /// mu_i(d) - population(d).
  double difference(int subgroup, double d) const;

 private:
  std::span<const DoseResponseModel> models_;
  std::span<const double> weights_;
};

/// A point where the absolute deviation attains its maximum.
struct ExtremalPoint {
  int subgroup = 0;  // 0-based
  double dose = 0.0;
  int sign = 1;  // sign of mu_i - population at `dose`
};

struct DistanceResult {
  double value = 0.0;
  std::vector<ExtremalPoint> argmax_points;
};

struct DistanceOptions {
  int grid_points = 2001;
  double dose_tolerance = 1e-8;
  /// Points within tie_tolerance * max(1, value) of the maximum are reported.
  double tie_tolerance = 1e-6;
};

/// max over d in range of |mu_i(d) - population(d)|: uniform grid scan, then
/// golden-section refinement around every grid local maximum.
DistanceResult d_inf(std::span<const DoseResponseModel> models, std::span<const double> weights, int subgroup,
                     DoseRange range, const DistanceOptions& opts = {});

/// Largest d_inf over a set of subgroups; argmax points from every subgroup
/// that attains it. Throws std::invalid_argument on an empty set.
DistanceResult d_inf_inf(std::span<const DoseResponseModel> models, std::span<const double> weights,
                         std::span<const int> subgroups, DoseRange range, const DistanceOptions& opts = {});

}  // namespace mrct
