#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mrct::optim {

/// Closed box lo <= x <= hi; `scale` gives the typical magnitude of each
/// coordinate and is used to precondition quasi-Newton steps.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> scale;

  std::size_t size() const { return lo.size(); }
  void clamp(std::span<double> x) const;
};

// ---------------------------------------------------------------------------
// Bounded Levenberg-Marquardt for min 0.5 * ||r(x)||^2.

/// Fills residuals r and Jacobian J (rows = residuals) at x.
using ResidualFn = std::function<void(std::span<const double> x, Eigen::VectorXd& r, Eigen::MatrixXd& J)>;

struct LmOptions {
  int max_iterations = 200;
  /// Converged when max_i |projected gradient_i| * max(1, |x_i|) <= gradient_tolerance * gradient_scale.
  double gradient_tolerance = 1e-6;
  double gradient_scale = 1.0;
  /// Iterations continue past convergence until this tighter level (same
  /// scaling) or until steps stall, so that estimates are accurate beyond
  /// the convergence test.
  double polish_tolerance = 1e-12;
  double step_tolerance = 1e-13;
  /// Finish an unconverged run with projected BFGS on the sum of squares.
  bool quasi_newton_fallback = true;
};

struct LmResult {
  std::vector<double> x;
  double cost = 0.0;  // 0.5 * ||r||^2
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

LmResult levenberg_marquardt(const ResidualFn& fn, std::vector<double> x0, const Box& box, const LmOptions& opts);

// ---------------------------------------------------------------------------
// Smooth minimization over a box: projected BFGS with Armijo backtracking.

/// Returns f(x) and writes the gradient into `grad`.
using ObjectiveFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct BfgsOptions {
  int max_iterations = 400;
  /// On the scaled projected gradient, infinity norm.
  double gradient_tolerance = 1e-10;
};

struct MinimizeResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

MinimizeResult minimize_box(const ObjectiveFn& fn, std::vector<double> x0, const Box& box, const BfgsOptions& opts);

// ---------------------------------------------------------------------------
// Augmented Lagrangian for min f(x) s.t. c(x) = 0, x in box:
//   L(x) = f(x) - lambda * c(x) + rho / 2 * c(x)^2.

struct AugLagOptions {
  int max_outer = 60;
  double constraint_tolerance = 1e-10;
  double rho_initial = 10.0;
  double rho_growth = 10.0;
  double rho_max = 1e12;
  BfgsOptions inner;
};

struct AugLagResult {
  std::vector<double> x;
  double objective = 0.0;
  double constraint = 0.0;
  double multiplier = 0.0;
  int outer_iterations = 0;
  bool converged = false;
};

AugLagResult augmented_lagrangian(const ObjectiveFn& objective, const ObjectiveFn& constraint,
                                  std::vector<double> x0, const Box& box, const AugLagOptions& opts);

}  // namespace mrct::optim
