#include "mrct/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "mrct/error.hpp"

namespace mrct {

bool FitResult::all_converged() const {
  return std::all_of(converged.begin(), converged.end(), [](char c) { return c != 0; });
}

std::vector<std::vector<double>> start_grid(const CellSummary& cells, const ModelSpec& spec) {
  std::vector<std::vector<double>> starts;
  auto clamp_into = [&](std::vector<double> p) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i], spec.bounds[i].lo, spec.bounds[i].hi);
    return p;
  };
  if (spec.family == Family::Constant) {
    double total = 0.0;
    for (std::size_t j = 0; j < cells.mean.size(); ++j) total += cells.count[j] * cells.mean[j];
    starts.push_back(clamp_into({total / cells.n}));
    return starts;
  }
  const double e0 = cells.mean.front();
  const auto [lo, hi] = std::minmax_element(cells.mean.begin(), cells.mean.end());
  const double range = *hi - *lo;
  const double emax = cells.mean.back() >= cells.mean.front() ? range : -range;
  const double top = cells.doses.back();
  for (double frac : {0.1, 0.25, 0.5}) {
    if (spec.family == Family::EmaxFull) {
      for (double h : {0.5, 1.0, 2.0}) starts.push_back(clamp_into({e0, emax, frac * top, h}));
    } else {
      starts.push_back(clamp_into({e0, emax, frac * top}));
    }
  }
  return starts;
}

SubgroupFit fit_subgroup(const CellSummary& cells, const ModelSpec& spec,
                         std::span<const std::vector<double>> warm_starts, const FitOptions& opts) {
  const int p = spec.num_params();
  const int r = static_cast<int>(cells.doses.size());
  if (cells.n < p + 1) {
    throw DataError(fmt::format("{} observations cannot identify {} parameters", cells.n, p));
  }
  optim::Box box;
  for (const auto& b : spec.bounds) {
    box.lo.push_back(b.lo);
    box.hi.push_back(b.hi);
  }
  std::vector<double> sqrt_n(r);
  for (int j = 0; j < r; ++j) sqrt_n[j] = std::sqrt(static_cast<double>(cells.count[j]));
  std::vector<double> grad(p);
  optim::ResidualFn fn = [&](std::span<const double> x, Eigen::VectorXd& res, Eigen::MatrixXd& J) {
    res.resize(r);
    J.resize(r, p);
    for (int j = 0; j < r; ++j) {
      res[j] = sqrt_n[j] * (cells.mean[j] - evaluate(spec, x, cells.doses[j]));
      gradient(spec, x, cells.doses[j], grad);
      for (int a = 0; a < p; ++a) J(j, a) = -sqrt_n[j] * grad[a];
    }
  };
  optim::LmOptions lm = opts.lm;
  lm.gradient_scale = static_cast<double>(cells.n);

  std::vector<std::vector<double>> starts(warm_starts.begin(), warm_starts.end());
  for (auto& s : start_grid(cells, spec)) starts.push_back(std::move(s));

  SubgroupFit best;
  best.sse = std::numeric_limits<double>::infinity();
  int total_iterations = 0;
  for (int s = 0; s < static_cast<int>(starts.size()); ++s) {
    if (static_cast<int>(starts[s].size()) != p) continue;
    auto res = optim::levenberg_marquardt(fn, starts[s], box, lm);
    total_iterations += res.iterations;
    const double sse = cells.within_ss + 2.0 * res.cost;
    if (!std::isfinite(sse)) continue;
    // Converged candidates always beat unconverged ones.
    const bool better = (res.converged && !best.converged) || (res.converged == best.converged && sse < best.sse);
    if (better) {
      best.params = res.x;
      best.sse = sse;
      best.converged = res.converged;
      best.start_index = s;
    }
  }
  if (best.params.empty()) throw ConvergenceError("every start produced a non-finite fit");
  best.iterations = total_iterations;
  best.sigma2 = std::max(best.sse / cells.n, std::numeric_limits<double>::min());
  return best;
}

double log_likelihood(std::span<const CellSummary> cells, std::span<const DoseResponseModel> models,
                      std::span<const double> sigma2) {
  double ll = 0.0;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    const double sse = cells[l].sse(models[l].spec(), models[l].params());
    ll -= 0.5 * cells[l].n * std::log(2.0 * std::numbers::pi * sigma2[l]) + sse / (2.0 * sigma2[l]);
  }
  return ll;
}

FitResult fit_mle(std::span<const CellSummary> cells, std::span<const ModelSpec> specs, const FitOptions& opts,
                  std::span<const DoseResponseModel> warm_starts) {
  if (cells.size() != specs.size()) throw ConfigError("one model family per subgroup is required");
  FitResult fit;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    std::vector<std::vector<double>> warm;
    if (!warm_starts.empty()) {
      auto wp = warm_starts[l].params();
      warm.emplace_back(wp.begin(), wp.end());
    }
    auto sub = fit_subgroup(cells[l], specs[l], warm, opts);
    fit.models.emplace_back(specs[l], sub.params);
    fit.sigma2.push_back(sub.sigma2);
    fit.sse.push_back(sub.sse);
    fit.converged.push_back(sub.converged);
    fit.iterations.push_back(sub.iterations);
  }
  fit.loglik = log_likelihood(cells, fit.models, fit.sigma2);
  return fit;
}

FitResult fit_mle(const Dataset& data, const StudyDesign& design, std::span<const ModelSpec> specs,
                  const FitOptions& opts) {
  data.validate(design);
  auto cells = summarize(data, design);
  return fit_mle(cells, specs, opts);
}

void require_converged(const FitResult& fit) {
  std::string bad;
  for (std::size_t l = 0; l < fit.converged.size(); ++l) {
    if (!fit.converged[l]) bad += (bad.empty() ? "" : ", ") + std::to_string(l + 1);
  }
  if (!bad.empty()) throw ConvergenceError("maximum-likelihood fit did not converge for subgroup(s) " + bad);
}

namespace {

// Packs (beta_1, ..., beta_k, x) and evaluates the lifted problem pieces.
class LiftedProblem {
 public:
  LiftedProblem(std::span<const CellSummary> cells, std::span<const double> weights,
                std::span<const DoseResponseModel> models)
      : cells_(cells), weights_(weights), models_(models) {
    for (const auto& m : models) {
      offsets_.push_back(dim_);
      dim_ += m.num_params();
    }
    n_total_ = 0;
    for (const auto& c : cells) n_total_ += c.n;
    grad_.resize(8);
  }

  int dim() const { return dim_ + 1; }  // last slot is the dose x
  int offset(int l) const { return offsets_[l]; }

  std::span<const double> block(std::span<const double> z, int l) const {
    return z.subspan(offsets_[l], models_[l].num_params());
  }

  // sum_l n_l / (2 n) * log SSE_l, the negative profile log-likelihood up to constants.
  double objective(std::span<const double> z, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    double f = 0.0;
    for (std::size_t l = 0; l < cells_.size(); ++l) {
      const auto& c = cells_[l];
      const auto& spec = models_[l].spec();
      auto b = block(z, static_cast<int>(l));
      const int p = models_[l].num_params();
      double sse = c.within_ss;
      double acc[4] = {0, 0, 0, 0};
      for (std::size_t j = 0; j < c.doses.size(); ++j) {
        const double res = c.mean[j] - evaluate(spec, b, c.doses[j]);
        sse += c.count[j] * res * res;
        gradient(spec, b, c.doses[j], std::span<double>(grad_.data(), p));
        for (int a = 0; a < p; ++a) acc[a] -= 2.0 * c.count[j] * res * grad_[a];
      }
      sse = std::max(sse, 1e-300);
      const double w = 0.5 * c.n / n_total_;
      f += w * std::log(sse);
      for (int a = 0; a < p; ++a) g[offsets_[l] + a] = w * acc[a] / sse;
    }
    return f;
  }

  // s * (mu_i(x) - population(x)) - delta
  double constraint(std::span<const double> z, std::span<double> g, int subgroup, int sign, double delta) {
    std::fill(g.begin(), g.end(), 0.0);
    const double x = z[dim_];
    double value = 0.0;
    double slope = 0.0;
    for (std::size_t l = 0; l < models_.size(); ++l) {
      const auto& spec = models_[l].spec();
      auto b = block(z, static_cast<int>(l));
      const int p = models_[l].num_params();
      const double coef = sign * ((static_cast<int>(l) == subgroup ? 1.0 : 0.0) - weights_[l]);
      value += coef * evaluate(spec, b, x);
      slope += coef * dose_derivative(spec, b, x);
      gradient(spec, b, x, std::span<double>(grad_.data(), p));
      for (int a = 0; a < p; ++a) g[offsets_[l] + a] = coef * grad_[a];
    }
    g[dim_] = slope;
    return value - delta;
  }

  std::vector<DoseResponseModel> unpack(std::span<const double> z) const {
    std::vector<DoseResponseModel> out;
    for (std::size_t l = 0; l < models_.size(); ++l) {
      auto b = block(z, static_cast<int>(l));
      out.push_back(models_[l].with_params(std::vector<double>(b.begin(), b.end())));
    }
    return out;
  }

 private:
  std::span<const CellSummary> cells_;
  std::span<const double> weights_;
  std::span<const DoseResponseModel> models_;
  std::vector<int> offsets_;
  int dim_ = 0;
  double n_total_ = 0;
  std::vector<double> grad_;
};

// Grid doses where s * (mu_i - population) has a local maximum, best first.
std::vector<double> dose_starts(std::span<const DoseResponseModel> models, std::span<const double> weights,
                                int subgroup, int sign, DoseRange range, int grid_points, int keep) {
  PopulationCurve pop(models, weights);
  const int n = std::max(3, grid_points);
  std::vector<double> xs(n), v(n);
  for (int g = 0; g < n; ++g) {
    xs[g] = g + 1 == n ? range.hi : range.lo + (range.hi - range.lo) * g / (n - 1);
    v[g] = sign * pop.difference(subgroup, xs[g]);
  }
  std::vector<std::pair<double, double>> peaks;
  for (int g = 0; g < n; ++g) {
    const bool left = g == 0 || v[g] >= v[g - 1];
    const bool right = g + 1 == n || v[g] > v[g + 1];
    if (left && right) peaks.emplace_back(v[g], xs[g]);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> out;
  for (int i = 0; i < static_cast<int>(peaks.size()) && i < keep; ++i) out.push_back(peaks[i].second);
  if (out.empty()) out.push_back(range.lo);
  return out;
}

}  // namespace

ConstrainedFitResult fit_constrained(std::span<const CellSummary> cells, std::span<const double> weights,
                                     const FitResult& unconstrained, std::span<const int> subgroups,
                                     DoseRange range, double delta, const ConstrainedOptions& opts) {
  if (!(delta > 0.0)) throw ConfigError("the equivalence threshold must be positive");
  ConstrainedFitResult out;
  const auto& fit = unconstrained.models;
  out.statistic = d_inf_inf(fit, weights, subgroups, range, opts.distance).value;
  if (out.statistic >= delta) {
    out.beta_hathat = fit;
    out.sigma2 = unconstrained.sigma2;
    out.loglik = unconstrained.loglik;
    return out;
  }
  out.active = true;

  LiftedProblem problem(cells, weights, fit);
  const int dim = problem.dim();
  optim::Box box;
  box.lo.resize(dim);
  box.hi.resize(dim);
  box.scale.resize(dim);
  std::vector<double> z0(dim);
  for (std::size_t l = 0; l < fit.size(); ++l) {
    const auto& spec = fit[l].spec();
    for (int a = 0; a < fit[l].num_params(); ++a) {
      const int idx = problem.offset(static_cast<int>(l)) + a;
      box.lo[idx] = spec.bounds[a].lo;
      box.hi[idx] = spec.bounds[a].hi;
      z0[idx] = fit[l].params()[a];
      box.scale[idx] = std::max(std::abs(z0[idx]), 1e-3 * (box.hi[idx] - box.lo[idx]));
    }
  }
  box.lo[dim - 1] = range.lo;
  box.hi[dim - 1] = range.hi;

  struct Best {
    std::vector<double> z;
    double objective = std::numeric_limits<double>::infinity();
    double residual = std::numeric_limits<double>::infinity();
    int outer = 0;
  } best;
  const double feasible_tol = 1e-6 * std::max(1.0, delta);

  for (int i : subgroups) {
    for (int sign : {1, -1}) {
      for (double x0 : dose_starts(fit, weights, i, sign, range, opts.distance.grid_points, 2)) {
        z0[dim - 1] = x0;
        box.scale[dim - 1] = std::max(std::abs(x0), 1e-2 * (range.hi - range.lo));
        optim::ObjectiveFn f = [&](std::span<const double> z, std::span<double> g) {
          return problem.objective(z, g);
        };
        optim::ObjectiveFn c = [&, i, sign](std::span<const double> z, std::span<double> g) {
          return problem.constraint(z, g, i, sign, delta);
        };
        auto res = optim::augmented_lagrangian(f, c, z0, box, opts.auglag);
        auto models = problem.unpack(res.x);
        const double d = d_inf_inf(models, weights, subgroups, range, opts.distance).value;
        const double residual = std::abs(d - delta);
        const bool feasible = residual <= feasible_tol;
        const bool best_feasible = best.residual <= feasible_tol;
        bool better;
        if (feasible != best_feasible) {
          better = feasible;
        } else if (feasible) {
          better = res.objective < best.objective;
        } else {
          better = residual < best.residual;
        }
        if (better) {
          best.z = res.x;
          best.objective = res.objective;
          best.residual = residual;
          best.outer = res.outer_iterations;
        }
      }
    }
  }
  if (best.residual > opts.residual_tolerance) {
    throw ConvergenceError(fmt::format("constrained fit could not reach distance {} (best residual {:.3g})", delta,
                                       best.residual));
  }
  out.beta_tilde = problem.unpack(best.z);
  out.beta_hathat = out.beta_tilde;
  out.constraint_residual = best.residual;
  out.outer_iterations = best.outer;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    const double sse = cells[l].sse(out.beta_tilde[l].spec(), out.beta_tilde[l].params());
    out.sigma2.push_back(std::max(sse / cells[l].n, std::numeric_limits<double>::min()));
  }
  out.loglik = log_likelihood(cells, out.beta_tilde, out.sigma2);
  return out;
}

ConstrainedFitResult fit_constrained(const Dataset& data, const StudyDesign& design,
                                     std::span<const ModelSpec> specs, std::span<const int> subgroups, double delta,
                                     const ConstrainedOptions& opts) {
  data.validate(design);
  auto cells = summarize(data, design);
  auto fit = fit_mle(cells, specs);
  return fit_constrained(cells, design.weights(), fit, subgroups, {design.doses().front(), design.max_dose()}, delta,
                         opts);
}

}  // namespace mrct
