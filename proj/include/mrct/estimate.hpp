#pragma once

#include <span>
#include <vector>

#include "mrct/design.hpp"
#include "mrct/distance.hpp"
#include "mrct/model.hpp"
#include "mrct/optim.hpp"

namespace mrct {

struct FitOptions {
  optim::LmOptions lm;
};

/// Least-squares (= maximum-likelihood) fit of one subgroup.
struct SubgroupFit {
  std::vector<double> params;
  double sse = 0.0;
  double sigma2 = 0.0;  // sse / n
  bool converged = false;
  int iterations = 0;
  int start_index = -1;  // which start produced the optimum
};

/// Unconstrained maximum-likelihood fit of all subgroups.
struct FitResult {
  std::vector<DoseResponseModel> models;
  std::vector<double> sigma2;
  std::vector<double> sse;
  double loglik = 0.0;
  std::vector<char> converged;
  std::vector<int> iterations;

  bool all_converged() const;
};

/// Deterministic start grid: e0 = placebo mean, emax = signed range of the
/// dose-group means, ed50 at 10/25/50 % of the top dose and h in {0.5, 1, 2}.
std::vector<std::vector<double>> start_grid(const CellSummary& cells, const ModelSpec& spec);

/// Runs bounded Levenberg-Marquardt from `warm_starts` followed by the start
/// grid and keeps the converged start with the smallest SSE (earliest index on
/// ties). If no start converges the best start is returned with
/// converged = false.
SubgroupFit fit_subgroup(const CellSummary& cells, const ModelSpec& spec,
                         std::span<const std::vector<double>> warm_starts = {}, const FitOptions& opts = {});

FitResult fit_mle(std::span<const CellSummary> cells, std::span<const ModelSpec> specs, const FitOptions& opts = {},
                  std::span<const DoseResponseModel> warm_starts = {});
FitResult fit_mle(const Dataset& data, const StudyDesign& design, std::span<const ModelSpec> specs,
                  const FitOptions& opts = {});

/// Gaussian log-likelihood of the data under the given curves and variances.
double log_likelihood(std::span<const CellSummary> cells, std::span<const DoseResponseModel> models,
                      std::span<const double> sigma2);

/// Throws ConvergenceError naming the subgroups whose fit did not converge.
void require_converged(const FitResult& fit);

struct ConstrainedOptions {
  optim::AugLagOptions auglag;
  DistanceOptions distance;
  /// Largest accepted |d(beta~) - delta|.
  double residual_tolerance = 1e-4;
};

struct ConstrainedFitResult {
  /// Constrained maximizer; empty when the constraint was not applied.
  std::vector<DoseResponseModel> beta_tilde;
  /// Parameters the bootstrap resamples from: beta_tilde if active, else the unconstrained fit.
  std::vector<DoseResponseModel> beta_hathat;
  /// Variances profiled at beta_hathat.
  std::vector<double> sigma2;
  double loglik = 0.0;
  double statistic = 0.0;  // unconstrained distance
  double constraint_residual = 0.0;
  bool active = false;
  int outer_iterations = 0;
};

/// Maximum likelihood over {beta : d(beta) = delta} when the unconstrained
/// distance falls below delta; otherwise returns the unconstrained fit.
///
/// The non-smooth constraint max_(i,d) |mu_i(d) - population(d)| = delta is
/// handled exactly by lifting: for every target subgroup i and sign s the
/// smooth problem
///     max loglik(beta)  s.t.  s * (mu_i(x) - population(x)) = delta,
/// is solved over (beta, x) with x in the dose range by an augmented
/// Lagrangian, and the candidate with the best likelihood whose exact
/// distance equals delta is kept.
ConstrainedFitResult fit_constrained(std::span<const CellSummary> cells, std::span<const double> weights,
                                     const FitResult& unconstrained, std::span<const int> subgroups,
                                     DoseRange range, double delta, const ConstrainedOptions& opts = {});

ConstrainedFitResult fit_constrained(const Dataset& data, const StudyDesign& design,
                                     std::span<const ModelSpec> specs, std::span<const int> subgroups, double delta,
                                     const ConstrainedOptions& opts = {});

}  // namespace mrct
