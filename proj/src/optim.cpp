#include "mrct/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mrct::optim {

void Box::clamp(std::span<double> x) const {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
}

namespace {

// True when coordinate i sits on a bound and the descent direction -g points outside.
bool blocked(double x, double lo, double hi, double g) {
  const double eps = 1e-12 * (1.0 + std::abs(x));
  return (x <= lo + eps && g > 0.0) || (x >= hi - eps && g < 0.0);
}

}  // namespace

LmResult levenberg_marquardt(const ResidualFn& fn, std::vector<double> x0, const Box& box, const LmOptions& opts) {
  const int n = static_cast<int>(x0.size());
  LmResult res;
  res.x = std::move(x0);
  box.clamp(res.x);

  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  fn(res.x, r, J);
  double cost = 0.5 * r.squaredNorm();

  Eigen::VectorXd rn;
  Eigen::MatrixXd Jn;
  std::vector<double> xn(n);
  std::vector<char> free(n);
  double lambda = -1.0;

  auto criterion = [&](const Eigen::VectorXd& g) {
    double crit = 0.0;
    for (int i = 0; i < n; ++i) {
      if (blocked(res.x[i], box.lo[i], box.hi[i], g[i])) continue;
      crit = std::max(crit, std::abs(g[i]) * std::max(1.0, std::abs(res.x[i])));
    }
    return crit;
  };

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    Eigen::VectorXd g = J.transpose() * r;
    res.gradient_norm = criterion(g);
    if (!std::isfinite(cost)) break;
    if (res.gradient_norm <= opts.polish_tolerance * opts.gradient_scale) break;
    Eigen::MatrixXd A = J.transpose() * J;
    double dmax = A.diagonal().maxCoeff();
    if (lambda < 0.0) lambda = 1e-3 * (dmax > 0.0 ? dmax : 1.0);
    int nfree = 0;
    for (int i = 0; i < n; ++i) {
      free[i] = !blocked(res.x[i], box.lo[i], box.hi[i], g[i]);
      nfree += free[i];
    }
    if (nfree == 0) break;
    Eigen::MatrixXd Af(nfree, nfree);
    Eigen::VectorXd gf(nfree);
    for (int a = 0, ia = 0; a < n; ++a) {
      if (!free[a]) continue;
      gf[ia] = g[a];
      for (int b = 0, ib = 0; b < n; ++b) {
        if (!free[b]) continue;
        Af(ia, ib++) = A(a, b);
      }
      ++ia;
    }
    bool accepted = false;
    double step_norm = 0.0;
    for (int attempt = 0; attempt < 30 && lambda < 1e20; ++attempt) {
      Eigen::MatrixXd M = Af;
      for (int i = 0; i < nfree; ++i) M(i, i) += lambda * std::max(Af(i, i), 1e-9 * dmax + 1e-300);
      Eigen::VectorXd delta = M.ldlt().solve(-gf);
      for (int a = 0, ia = 0; a < n; ++a) xn[a] = res.x[a] + (free[a] ? delta[ia++] : 0.0);
      box.clamp(xn);
      fn(xn, rn, Jn);
      const double cn = 0.5 * rn.squaredNorm();
      if (std::isfinite(cn) && cn < cost) {
        step_norm = 0.0;
        double xnorm = 0.0;
        for (int a = 0; a < n; ++a) {
          step_norm = std::max(step_norm, std::abs(xn[a] - res.x[a]));
          xnorm = std::max(xnorm, std::abs(res.x[a]));
        }
        step_norm /= (1.0 + xnorm);
        res.x = xn;
        std::swap(r, rn);
        std::swap(J, Jn);
        cost = cn;
        lambda = std::max(lambda / 3.0, 1e-15);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted || step_norm <= opts.step_tolerance) {
      // A stalled step far from stationarity keeps going while progress is made.
      Eigen::VectorXd gfinal = J.transpose() * r;
      if (criterion(gfinal) > opts.gradient_tolerance * opts.gradient_scale && accepted) continue;
      break;
    }
  }
  res.gradient_norm = criterion(J.transpose() * r);
  res.converged = std::isfinite(cost) && res.gradient_norm <= opts.gradient_tolerance * opts.gradient_scale;
  if (!res.converged && std::isfinite(cost) && opts.quasi_newton_fallback) {
    // Gauss-Newton converges only linearly when the residuals are large
    // relative to the curvature; finish with quasi-Newton on the full cost.
    ObjectiveFn half_ss = [&](std::span<const double> x, std::span<double> grad) {
      fn(x, rn, Jn);
      Eigen::VectorXd g = Jn.transpose() * rn;
      for (int i = 0; i < n; ++i) grad[i] = g[i];
      return 0.5 * rn.squaredNorm();
    };
    BfgsOptions bo;
    bo.gradient_tolerance = opts.polish_tolerance * opts.gradient_scale;
    auto qn = minimize_box(half_ss, res.x, box, bo);
    if (std::isfinite(qn.value) && qn.value <= cost) {
      res.x = qn.x;
      res.iterations += qn.iterations;
      fn(res.x, r, J);
      cost = 0.5 * r.squaredNorm();
      res.gradient_norm = criterion(J.transpose() * r);
      res.converged = res.gradient_norm <= opts.gradient_tolerance * opts.gradient_scale;
    }
  }
  res.cost = cost;
  return res;
}


MinimizeResult minimize_box(const ObjectiveFn& fn, std::vector<double> x0, const Box& box, const BfgsOptions& opts) {
  const int n = static_cast<int>(x0.size());
  std::vector<double> scale(n, 1.0);
  if (!box.scale.empty()) scale = box.scale;
  std::vector<double> zlo(n), zhi(n), z(n), x(n), grad(n);
  for (int i = 0; i < n; ++i) {
    zlo[i] = box.lo[i] / scale[i];
    zhi[i] = box.hi[i] / scale[i];
    z[i] = std::clamp(x0[i], box.lo[i], box.hi[i]) / scale[i];
  }
  auto eval = [&](const std::vector<double>& zz, Eigen::VectorXd& gz) {
    // unscaling can step outside the box by a rounding error
    for (int i = 0; i < n; ++i) x[i] = std::clamp(zz[i] * scale[i], box.lo[i], box.hi[i]);
    double f = fn(x, grad);
    for (int i = 0; i < n; ++i) gz[i] = grad[i] * scale[i];
    return f;
  };

  Eigen::VectorXd g(n), gn(n);
  double f = eval(z, g);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool identity = true;
  MinimizeResult res;
  std::vector<double> zn(n);

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    Eigen::VectorXd pg = g;
    std::vector<char> act(n);
    for (int i = 0; i < n; ++i) {
      act[i] = blocked(z[i], zlo[i], zhi[i], g[i]);
      if (act[i]) pg[i] = 0.0;
    }
    if (!std::isfinite(f)) break;
    if (pg.lpNorm<Eigen::Infinity>() <= opts.gradient_tolerance) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd p = -(H * pg);
    for (int i = 0; i < n; ++i) {
      if (act[i]) p[i] = 0.0;
    }
    if (p.dot(pg) >= 0.0) {
      H.setIdentity();
      identity = true;
      p = -pg;
    }
    double t = 1.0;
    if (identity) t = std::min(1.0, 1.0 / std::max(pg.lpNorm<Eigen::Infinity>(), 1e-300));
    bool accepted = false;
    double fn_val = f;
    for (int ls = 0; ls < 60; ++ls) {
      for (int i = 0; i < n; ++i) zn[i] = std::clamp(z[i] + t * p[i], zlo[i], zhi[i]);
      double decrease = 0.0;
      for (int i = 0; i < n; ++i) decrease += g[i] * (zn[i] - z[i]);
      if (decrease >= 0.0) {
        t *= 0.5;
        continue;
      }
      fn_val = eval(zn, gn);
      if (std::isfinite(fn_val) && fn_val <= f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!identity) {
        H.setIdentity();
        identity = true;
        continue;
      }
      break;
    }
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = zn[i] - z[i];
    Eigen::VectorXd y = gn - g;
    const double sy = s.dot(y);
    const double change = std::abs(f - fn_val);
    z = zn;
    g = gn;
    f = fn_val;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (identity) H *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      Eigen::VectorXd Hy = H * y;
      H += rho * rho * (sy + y.dot(Hy)) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
      identity = false;
    }
    if (change <= 1e-16 * (1.0 + std::abs(f)) && s.lpNorm<Eigen::Infinity>() <= 1e-14) break;
  }
  res.x.resize(n);
  for (int i = 0; i < n; ++i) res.x[i] = std::clamp(z[i] * scale[i], box.lo[i], box.hi[i]);
  res.value = f;
  return res;
}

AugLagResult augmented_lagrangian(const ObjectiveFn& objective, const ObjectiveFn& constraint,
                                  std::vector<double> x0, const Box& box, const AugLagOptions& opts) {
  const std::size_t n = x0.size();
  AugLagResult res;
  res.x = std::move(x0);
  box.clamp(res.x);
  double lambda = 0.0;
  double rho = opts.rho_initial;
  double c_prev = std::numeric_limits<double>::infinity();
  std::vector<double> gc(n);

  for (res.outer_iterations = 1; res.outer_iterations <= opts.max_outer; ++res.outer_iterations) {
    auto merit = [&](std::span<const double> x, std::span<double> grad) {
      double f = objective(x, grad);
      double c = constraint(x, gc);
      const double w = rho * c - lambda;
      for (std::size_t i = 0; i < n; ++i) grad[i] += w * gc[i];
      return f - lambda * c + 0.5 * rho * c * c;
    };
    auto inner = minimize_box(merit, res.x, box, opts.inner);
    res.x = inner.x;
    const double c = constraint(res.x, gc);
    res.constraint = c;
    if (std::abs(c) <= opts.constraint_tolerance) {
      res.converged = true;
      break;
    }
    lambda -= rho * c;
    if (std::abs(c) > 0.25 * std::abs(c_prev)) rho = std::min(rho * opts.rho_growth, opts.rho_max);
    c_prev = c;
  }
  std::vector<double> gf(n);
  res.objective = objective(res.x, gf);
  res.multiplier = lambda;
  res.outer_iterations = std::min(res.outer_iterations, opts.max_outer);
  return res;
}

}  // namespace mrct::optim
