#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mrct/design.hpp"
#include "mrct/distance.hpp"
#include "mrct/model.hpp"

namespace mrct {

struct InformationBlocks {
  /// Sigma_l = (1/sigma2_l) sum_j kappa_lj grad mu_l(d_j) grad mu_l(d_j)^T.
  std::vector<Eigen::MatrixXd> blocks;
  /// blockdiag((1/kappa_l) Sigma_l^{-1}), the limit covariance of sqrt(n)(beta_hat - beta).
  Eigen::MatrixXd sigma;
  /// Starting row of each subgroup's block in `sigma`.
  std::vector<int> offsets;
};

/// Throws DataError naming the first subgroup whose block is singular.
InformationBlocks information_blocks(std::span<const double> doses, std::span<const double> kappa,
                                     const std::vector<std::vector<double>>& kappa_dose,
                                     std::span<const DoseResponseModel> models, std::span<const double> sigma2);

/// Limit objects of the estimator for fixed true curves and allocation ratios.
class AsymptoticModel {
 public:
  AsymptoticModel(std::vector<double> doses, std::vector<double> kappa, std::vector<std::vector<double>> kappa_dose,
                  std::vector<double> weights, std::vector<DoseResponseModel> models, std::vector<double> sigma2);

  /// kappa_l = n_l / n and kappa_lj = n_lj / n_l taken from the design.
  static AsymptoticModel from_design(const StudyDesign& design, std::vector<DoseResponseModel> models,
                                     std::vector<double> sigma2);

  const InformationBlocks& information() const { return info_; }
  const Eigen::MatrixXd& sigma() const { return info_.sigma; }
  std::span<const double> kappa() const { return kappa_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const DoseResponseModel> models() const { return models_; }
  DoseRange range() const { return {doses_.front(), doses_.back()}; }
  int dimension() const { return static_cast<int>(info_.sigma.rows()); }

  /// Gradient in all parameters of mu_i(d) - population(d):
  /// block l is (delta_il - p_l) grad mu_l(d).
  Eigen::VectorXd difference_gradient(int subgroup, double dose) const;

  /// Square root F of sigma (F F^T = sigma) from the eigendecomposition.
  const Eigen::MatrixXd& factor() const { return factor_; }

 private:
  std::vector<double> doses_;
  std::vector<double> kappa_;
  std::vector<std::vector<double>> kappa_dose_;
  std::vector<double> weights_;
  std::vector<DoseResponseModel> models_;
  std::vector<double> sigma2_;
  InformationBlocks info_;
  Eigen::MatrixXd factor_;
};

struct LimitSample {
  std::vector<double> values;
  /// Extremal set used, with signs (E+ has sign +1, E- has sign -1).
  std::vector<ExtremalPoint> extremal;
  double distance = 0.0;
  /// More than one extremal point: continuity of the limit law is assumed, not checked.
  bool multi_point = false;
};

struct SampleOptions {
  int workers = 1;
  int chunk_size = 8192;
  DistanceOptions distance;
};

/// Draws of T = max(max_{E+} G(d), max_{E-} -G(d)) with G(d) = g(d)^T Z, Z ~ N(0, sigma).
LimitSample sample_T(const AsymptoticModel& asym, int subgroup, int n, std::uint64_t seed,
                     const SampleOptions& opts = {});

/// Draws of S, the same maximum over the indexed extremal set of several subgroups.
LimitSample sample_S(const AsymptoticModel& asym, std::span<const int> subgroups, int n, std::uint64_t seed,
                     const SampleOptions& opts = {});

/// Draws of the max over arbitrary signed points (used by both samplers).
std::vector<double> sample_max(const AsymptoticModel& asym, std::span<const ExtremalPoint> points, int n,
                               std::uint64_t seed, const SampleOptions& opts = {});

}  // namespace mrct
