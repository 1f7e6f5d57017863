#include "mrct/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mrct/error.hpp"

namespace mrct {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::EmaxFull: return "emax";
    case Family::EmaxFixedHill: return "emax_fixed_hill";
    case Family::Constant: return "constant";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  if (name == "emax") return Family::EmaxFull;
  if (name == "emax_fixed_hill") return Family::EmaxFixedHill;
  if (name == "constant") return Family::Constant;
  throw ConfigError("unknown model family '" + std::string(name) + "'");
}

int num_params(Family family) {
  switch (family) {
    case Family::EmaxFull: return 4;
    case Family::EmaxFixedHill: return 3;
    case Family::Constant: return 1;
  }
  return 0;
}

ModelSpec ModelSpec::defaults(Family family, double max_dose, double fixed_hill) {
  ModelSpec spec;
  spec.family = family;
  spec.fixed_hill = fixed_hill;
  double ed50_hi = 10.0 * (max_dose > 0.0 ? max_dose : 1.0);
  switch (family) {
    case Family::EmaxFull:
      spec.bounds = {{-10.0, 10.0}, {-10.0, 10.0}, {1e-3, ed50_hi}, {0.1, 10.0}};
      break;
    case Family::EmaxFixedHill:
      spec.bounds = {{-10.0, 10.0}, {-10.0, 10.0}, {1e-3, ed50_hi}};
      break;
    case Family::Constant:
      spec.bounds = {{-10.0, 10.0}};
      break;
  }
  return spec;
}

int ModelSpec::num_params() const { return mrct::num_params(family); }

bool ModelSpec::contains(std::span<const double> params) const {
  if (static_cast<int>(params.size()) != num_params()) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(params[i] >= bounds[i].lo && params[i] <= bounds[i].hi)) return false;
  }
  return true;
}

std::vector<std::string> ModelSpec::param_names() const {
  switch (family) {
    case Family::EmaxFull: return {"e0", "emax", "ed50", "h"};
    case Family::EmaxFixedHill: return {"e0", "emax", "ed50"};
    case Family::Constant: return {"c"};
  }
  return {};
}

namespace {

// Fraction of the maximal effect reached at dose d: d^h / (d^h + ed50^h).
inline double emax_fraction(double d, double ed50, double h) {
  if (d <= 0.0) return 0.0;
  if (h == 1.0) return d / (d + ed50);
  return 1.0 / (1.0 + std::pow(ed50 / d, h));
}

}  // namespace

double evaluate(const ModelSpec& spec, std::span<const double> p, double d) {
  switch (spec.family) {
    case Family::EmaxFull: return p[0] + p[1] * emax_fraction(d, p[2], p[3]);
    case Family::EmaxFixedHill: return p[0] + p[1] * emax_fraction(d, p[2], spec.fixed_hill);
    case Family::Constant: return p[0];
  }
  return 0.0;
}

void gradient(const ModelSpec& spec, std::span<const double> p, double d, std::span<double> out) {
  if (spec.family == Family::Constant) {
    out[0] = 1.0;
    return;
  }
  const double h = spec.family == Family::EmaxFull ? p[3] : spec.fixed_hill;
  const double e = p[1];
  const double ed50 = p[2];
  const double f = emax_fraction(d, ed50, h);
  const double slope = f * (1.0 - f);  // u / (1 + u)^2 with u = (d / ed50)^h
  out[0] = 1.0;
  out[1] = f;
  out[2] = -e * h * slope / ed50;
  if (spec.family == Family::EmaxFull) out[3] = d > 0.0 ? e * slope * std::log(d / ed50) : 0.0;
}

DoseResponseModel::DoseResponseModel(ModelSpec spec, std::vector<double> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  if (static_cast<int>(params_.size()) != spec_.num_params()) {
    throw std::invalid_argument("model '" + std::string(family_name(spec_.family)) + "' expects " +
                                std::to_string(spec_.num_params()) + " parameters, got " +
                                std::to_string(params_.size()));
  }
  if (static_cast<int>(spec_.bounds.size()) != spec_.num_params()) {
    throw std::invalid_argument("bounds length does not match the parameter count");
  }
  for (double v : params_) {
    if (!std::isfinite(v)) throw std::invalid_argument("model parameters must be finite");
  }
  if (spec_.family != Family::Constant && !(params_[2] > 0.0)) {
    throw std::invalid_argument("ed50 must be positive");
  }
  if (spec_.family == Family::EmaxFull && !(params_[3] > 0.0)) {
    throw std::invalid_argument("Hill coefficient must be positive");
  }
  if (spec_.family == Family::EmaxFixedHill && !(spec_.fixed_hill > 0.0)) {
    throw std::invalid_argument("Hill coefficient must be positive");
  }
  if (!spec_.contains(params_)) throw std::invalid_argument("model parameters lie outside their bounds");
}

DoseResponseModel DoseResponseModel::emax(const EmaxParams& p, double max_dose) {
  return {ModelSpec::defaults(Family::EmaxFull, max_dose), {p.e0, p.emax, p.ed50, p.h}};
}

DoseResponseModel DoseResponseModel::emax_fixed_hill(double e0, double emax, double ed50, double max_dose,
                                                     double h) {
  return {ModelSpec::defaults(Family::EmaxFixedHill, max_dose, h), {e0, emax, ed50}};
}

DoseResponseModel DoseResponseModel::constant(double c) {
  return {ModelSpec::defaults(Family::Constant, 1.0), {c}};
}

double DoseResponseModel::evaluate(double d) const {
  if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("dose must be finite and non-negative");
  return mrct::evaluate(spec_, params_, d);
}

std::vector<double> DoseResponseModel::gradient(double d) const {
  if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("dose must be finite and non-negative");
  std::vector<double> g(params_.size());
  mrct::gradient(spec_, params_, d, g);
  return g;
}

EmaxParams DoseResponseModel::emax_params() const {
  switch (spec_.family) {
    case Family::EmaxFull: return {params_[0], params_[1], params_[2], params_[3]};
    case Family::EmaxFixedHill: return {params_[0], params_[1], params_[2], spec_.fixed_hill};
    case Family::Constant: return {params_[0], 0.0, 1.0, 1.0};
  }
  return {};
}

DoseResponseModel DoseResponseModel::with_params(std::vector<double> params) const {
  return {spec_, std::move(params)};
}

}  // namespace mrct

namespace mrct {

double dose_derivative(const ModelSpec& spec, std::span<const double> p, double d) {
  if (spec.family == Family::Constant) return 0.0;
  const double h = spec.family == Family::EmaxFull ? p[3] : spec.fixed_hill;
  if (d <= 0.0) {
    if (h == 1.0) return p[1] / p[2];
    if (h > 1.0) return 0.0;
    d = 1e-10;
  }
  const double f = emax_fraction(d, p[2], h);
  return p[1] * h * f * (1.0 - f) / d;
}

}  // namespace mrct
