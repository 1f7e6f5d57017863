#include "mrct/distance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mrct {

PopulationCurve::PopulationCurve(std::span<const DoseResponseModel> models, std::span<const double> weights)
    : models_(models), weights_(weights) {
  if (models.size() != weights.size() || models.empty()) {
    throw std::invalid_argument("population curve needs one weight per model");
  }
}

double PopulationCurve::evaluate(double d) const {
  double s = 0.0;
  for (std::size_t l = 0; l < models_.size(); ++l) s += weights_[l] * mrct::evaluate(models_[l].spec(), models_[l].params(), d);
  return s;
}

double PopulationCurve::difference(int subgroup, double d) const {
  return mrct::evaluate(models_[subgroup].spec(), models_[subgroup].params(), d) - evaluate(d);
}

namespace {

constexpr double kInvPhi = 0.6180339887498949;

struct Candidate {
  double dose;
  double diff;  // signed
};

// Maximizes |f| on [a, b] by golden-section search, never returning a point
// worse than the best of the bracket ends and `start`.
Candidate refine(const PopulationCurve& pop, int i, double a, double b, Candidate start, double tol) {
  auto absf = [&](double x) { return std::abs(pop.difference(i, x)); };
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = absf(c);
  double fd = absf(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = absf(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = absf(d);
    }
  }
  Candidate best = start;
  for (double x : {a, b, 0.5 * (a + b)}) {
    double v = pop.difference(i, x);
    if (std::abs(v) > std::abs(best.diff)) best = {x, v};
  }
  return best;
}

// Refined local maxima of |mu_i - population| for one subgroup.
std::vector<Candidate> subgroup_maxima(const PopulationCurve& pop, int i, std::span<const double> grid,
                                       std::span<const double> diff, const DistanceOptions& opts) {
  const std::size_t n = grid.size();
  double grid_max = 0.0;
  for (double v : diff) grid_max = std::max(grid_max, std::abs(v));
  std::vector<Candidate> out;
  for (std::size_t g = 0; g < n; ++g) {
    const double v = std::abs(diff[g]);
    if (v < 0.5 * grid_max) continue;
    const bool left_ok = g == 0 || v >= std::abs(diff[g - 1]);
    const bool right_ok = g + 1 == n || v >= std::abs(diff[g + 1]);
    if (!left_ok || !right_ok) continue;
    // Plateaus: keep only the first grid point of a run of equal values.
    if (g > 0 && v == std::abs(diff[g - 1])) continue;
    const double a = grid[g == 0 ? 0 : g - 1];
    const double b = grid[g + 1 == n ? n - 1 : g + 1];
    out.push_back(refine(pop, i, a, b, {grid[g], diff[g]}, opts.dose_tolerance));
  }
  return out;
}

DistanceResult collect(std::span<const std::pair<int, Candidate>> cands, const DistanceOptions& opts,
                       const PopulationCurve& pop, int first_subgroup, double lo) {
  DistanceResult res;
  for (const auto& [i, c] : cands) res.value = std::max(res.value, std::abs(c.diff));
  if (res.value < 1e-14) {
    res.argmax_points.push_back({first_subgroup, lo, 1});
    res.value = std::abs(pop.difference(first_subgroup, lo));
    return res;
  }
  const double cut = res.value - opts.tie_tolerance * std::max(1.0, res.value);
  for (const auto& [i, c] : cands) {
    if (std::abs(c.diff) < cut) continue;
    bool dup = false;
    for (const auto& p : res.argmax_points) {
      if (p.subgroup == i && std::abs(p.dose - c.dose) <= 1e3 * opts.dose_tolerance) dup = true;
    }
    if (!dup) res.argmax_points.push_back({i, c.dose, c.diff >= 0.0 ? 1 : -1});
  }
  std::sort(res.argmax_points.begin(), res.argmax_points.end(), [](const auto& x, const auto& y) {
    return x.subgroup != y.subgroup ? x.subgroup < y.subgroup : x.dose < y.dose;
  });
  return res;
}

}  // namespace

DistanceResult d_inf_inf(std::span<const DoseResponseModel> models, std::span<const double> weights,
                         std::span<const int> subgroups, DoseRange range, const DistanceOptions& opts) {
  if (subgroups.empty()) throw std::invalid_argument("distance needs at least one subgroup");
  const int k = static_cast<int>(models.size());
  for (int i : subgroups) {
    if (i < 0 || i >= k) throw std::invalid_argument("subgroup index out of range");
  }
  if (!(range.hi > range.lo)) throw std::invalid_argument("empty dose range");
  PopulationCurve pop(models, weights);

  const int n = std::max(2, opts.grid_points);
  std::vector<double> grid(n);
  for (int g = 0; g < n; ++g) grid[g] = range.lo + (range.hi - range.lo) * g / (n - 1);
  grid.back() = range.hi;

  std::vector<std::vector<double>> values(k, std::vector<double>(n));
  std::vector<double> mix(n, 0.0);
  for (int l = 0; l < k; ++l) {
    for (int g = 0; g < n; ++g) {
      values[l][g] = evaluate(models[l].spec(), models[l].params(), grid[g]);
      mix[g] += weights[l] * values[l][g];
    }
  }
  std::vector<std::pair<int, Candidate>> cands;
  std::vector<double> diff(n);
  for (int i : subgroups) {
    for (int g = 0; g < n; ++g) diff[g] = values[i][g] - mix[g];
    for (const auto& c : subgroup_maxima(pop, i, grid, diff, opts)) cands.emplace_back(i, c);
  }
  return collect(cands, opts, pop, subgroups.front(), range.lo);
}

DistanceResult d_inf(std::span<const DoseResponseModel> models, std::span<const double> weights, int subgroup,
                     DoseRange range, const DistanceOptions& opts) {
  const int set[1] = {subgroup};
  return d_inf_inf(models, weights, set, range, opts);
}

}  // namespace mrct
