#include "mrct/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "mrct/error.hpp"
#include "mrct/parallel.hpp"
#include "mrct/rng.hpp"

namespace mrct {

namespace {

constexpr double kEigenFloor = 1e-12;
constexpr double kFlooredMassLimit = 1e-8;

Eigen::VectorXd param_gradient(const DoseResponseModel& m, double d) {
  auto g = m.gradient(d);
  return Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

}  // namespace

InformationBlocks information_blocks(std::span<const double> doses, std::span<const double> kappa,
                                     const std::vector<std::vector<double>>& kappa_dose,
                                     std::span<const DoseResponseModel> models, std::span<const double> sigma2) {
  const auto k = models.size();
  if (kappa.size() != k || kappa_dose.size() != k || sigma2.size() != k) {
    throw std::invalid_argument("information_blocks: inconsistent number of subgroups");
  }
  InformationBlocks out;
  int dim = 0;
  for (std::size_t l = 0; l < k; ++l) {
    out.offsets.push_back(dim);
    dim += models[l].num_params();
  }
  out.sigma = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t l = 0; l < k; ++l) {
    const int p = models[l].num_params();
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t j = 0; j < doses.size(); ++j) {
      Eigen::VectorXd g = param_gradient(models[l], doses[j]);
      block.noalias() += kappa_dose[l][j] * g * g.transpose();
    }
    block /= sigma2[l];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block);
    const auto& ev = eig.eigenvalues();
    if (!(ev.minCoeff() > 1e-12 * std::max(1.0, ev.maxCoeff()))) {
      throw DataError(fmt::format("information matrix of subgroup {} is singular (smallest eigenvalue {:.3g})",
                                  l + 1, ev.minCoeff()));
    }
    Eigen::MatrixXd inverse =
        eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose() / kappa[l];
    out.sigma.block(out.offsets[l], out.offsets[l], p, p) = 0.5 * (inverse + inverse.transpose());
    out.blocks.push_back(std::move(block));
  }
  return out;
}

AsymptoticModel::AsymptoticModel(std::vector<double> doses, std::vector<double> kappa,
                                 std::vector<std::vector<double>> kappa_dose, std::vector<double> weights,
                                 std::vector<DoseResponseModel> models, std::vector<double> sigma2)
    : doses_(std::move(doses)),
      kappa_(std::move(kappa)),
      kappa_dose_(std::move(kappa_dose)),
      weights_(std::move(weights)),
      models_(std::move(models)),
      sigma2_(std::move(sigma2)) {
  const auto k = models_.size();
  if (k == 0 || weights_.size() != k) throw std::invalid_argument("AsymptoticModel: weights and models differ in size");
  for (double s : sigma2_) {
    if (!(s > 0.0)) throw std::invalid_argument("AsymptoticModel: variances must be positive");
  }
  for (std::size_t l = 0; l < k; ++l) {
    if (kappa_dose_.size() == k && kappa_dose_[l].size() != doses_.size()) {
      throw std::invalid_argument("AsymptoticModel: dose shares do not match the dose levels");
    }
  }
  info_ = information_blocks(doses_, kappa_, kappa_dose_, models_, sigma2_);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info_.sigma);
  Eigen::VectorXd ev = eig.eigenvalues();
  const double trace = ev.sum();
  double floored = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < kEigenFloor) {
      floored += kEigenFloor - ev[i];
      ev[i] = kEigenFloor;
    }
  }
  if (floored > kFlooredMassLimit * trace) {
    throw DataError(fmt::format("limit covariance is not positive definite (floored eigenvalue mass {:.3g})", floored));
  }
  factor_ = eig.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

AsymptoticModel AsymptoticModel::from_design(const StudyDesign& design, std::vector<DoseResponseModel> models,
                                             std::vector<double> sigma2) {
  const int k = design.num_subgroups();
  const double n = design.total_size();
  std::vector<double> kappa(k);
  std::vector<std::vector<double>> kappa_dose(k);
  for (int l = 0; l < k; ++l) {
    const double nl = design.subgroup_size(l);
    kappa[l] = nl / n;
    for (int j = 0; j < design.num_doses(); ++j) kappa_dose[l].push_back(design.count(l, j) / nl);
  }
  return AsymptoticModel({design.doses().begin(), design.doses().end()}, std::move(kappa), std::move(kappa_dose),
                         {design.weights().begin(), design.weights().end()}, std::move(models), std::move(sigma2));
}

Eigen::VectorXd AsymptoticModel::difference_gradient(int subgroup, double dose) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dimension());
  for (std::size_t l = 0; l < models_.size(); ++l) {
    const double coef = (static_cast<int>(l) == subgroup ? 1.0 : 0.0) - weights_[l];
    g.segment(info_.offsets[l], models_[l].num_params()) = coef * param_gradient(models_[l], dose);
  }
  return g;
}

std::vector<double> sample_max(const AsymptoticModel& asym, std::span<const ExtremalPoint> points, int n,
                               std::uint64_t seed, const SampleOptions& opts) {
  if (points.empty()) throw std::invalid_argument("sample_max: empty extremal set");
  if (n < 0) throw std::invalid_argument("sample_max: negative sample size");
  // G at point e equals a_e^T xi with xi standard normal and a_e = F^T g_e.
  const int dim = asym.dimension();
  Eigen::MatrixXd a(dim, static_cast<Eigen::Index>(points.size()));
  for (std::size_t e = 0; e < points.size(); ++e) {
    a.col(static_cast<Eigen::Index>(e)) =
        points[e].sign * (asym.factor().transpose() * asym.difference_gradient(points[e].subgroup, points[e].dose));
  }
  std::vector<double> values(static_cast<std::size_t>(n));
  const int chunk = std::max(1, opts.chunk_size);
  const std::size_t chunks = (static_cast<std::size_t>(n) + chunk - 1) / chunk;
  parallel_for(chunks, opts.workers, [&](std::size_t c) {
    NormalStream normal(stream_seed(seed, c));
    Eigen::VectorXd xi(dim);
    const std::size_t end = std::min(values.size(), (c + 1) * static_cast<std::size_t>(chunk));
    for (std::size_t s = c * chunk; s < end; ++s) {
      for (int i = 0; i < dim; ++i) xi[i] = normal();
      values[s] = (a.transpose() * xi).maxCoeff();
    }
  });
  return values;
}

LimitSample sample_S(const AsymptoticModel& asym, std::span<const int> subgroups, int n, std::uint64_t seed,
                     const SampleOptions& opts) {
  LimitSample out;
  auto dist = d_inf_inf(asym.models(), asym.weights(), subgroups, asym.range(), opts.distance);
  out.distance = dist.value;
  out.extremal = dist.argmax_points;
  out.multi_point = out.extremal.size() > 1;
  out.values = sample_max(asym, out.extremal, n, seed, opts);
  return out;
}

LimitSample sample_T(const AsymptoticModel& asym, int subgroup, int n, std::uint64_t seed, const SampleOptions& opts) {
  const int set[1] = {subgroup};
  return sample_S(asym, set, n, seed, opts);
}

}  // namespace mrct
