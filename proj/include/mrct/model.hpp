#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mrct {

/// Parametric dose-response families. Parameter order is fixed per family:
///   EmaxFull       (e0, emax, ed50, h)
///   EmaxFixedHill  (e0, emax, ed50), h held at ModelSpec::fixed_hill
///   Constant       (c)
enum class Family { EmaxFull, EmaxFixedHill, Constant };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);

struct ParamBounds {
  double lo;
  double hi;
};

/// Four-parameter E-max curve e0 + emax * d^h / (d^h + ed50^h).
struct EmaxParams {
  double e0 = 0.0;
  double emax = 0.0;
  double ed50 = 1.0;
  double h = 1.0;
};

/// A curve family together with its box constraints. The box keeps the
/// parameter space compact and the optimizers away from singular corners.
struct ModelSpec {
  Family family = Family::EmaxFixedHill;
  double fixed_hill = 1.0;
  std::vector<ParamBounds> bounds;

  /// Default box for a family on doses up to max_dose:
  /// e0, emax in [-10, 10]; ed50 in [1e-3, 10 * max_dose]; h in [0.1, 10].
  static ModelSpec defaults(Family family, double max_dose, double fixed_hill = 1.0);

  int num_params() const;
  bool contains(std::span<const double> params) const;
  std::vector<std::string> param_names() const;
};

int num_params(Family family);

/// Evaluates the curve of `spec` at dose d >= 0 without argument checks.
double evaluate(const ModelSpec& spec, std::span<const double> params, double d);

/// Parameter gradient of the curve at dose d. `out` has num_params() slots.
/// The h-derivative at d = 0 is its limit value 0.
void gradient(const ModelSpec& spec, std::span<const double> params, double d, std::span<double> out);

/// A fully specified curve: family, bounds and a parameter vector inside them.
/// Immutable once constructed.
class DoseResponseModel {
 public:
  DoseResponseModel(ModelSpec spec, std::vector<double> params);

  static DoseResponseModel emax(const EmaxParams& p, double max_dose);
  static DoseResponseModel emax_fixed_hill(double e0, double emax, double ed50, double max_dose,
                                           double h = 1.0);
  static DoseResponseModel constant(double c);

  /// mu(d); throws std::invalid_argument for d < 0 or non-finite d.
  double evaluate(double d) const;
  std::vector<double> gradient(double d) const;

  const ModelSpec& spec() const { return spec_; }
  Family family() const { return spec_.family; }
  std::span<const double> params() const { return params_; }
  int num_params() const { return static_cast<int>(params_.size()); }

  /// E-max view of the parameters (h filled in for the fixed-Hill family).
  EmaxParams emax_params() const;

  DoseResponseModel with_params(std::vector<double> params) const;

 private:
  ModelSpec spec_;
  std::vector<double> params_;
};

}  // namespace mrct

namespace mrct {

/// d mu / d dose. At d = 0 with h < 1 the derivative is unbounded; the value
/// at a dose of 1e-10 is returned instead.
double dose_derivative(const ModelSpec& spec, std::span<const double> params, double d);

}  // namespace mrct
