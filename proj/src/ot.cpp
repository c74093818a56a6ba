#include "sinkdem/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace sinkdem::ot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log sum_k exp(t_k) with max shift; -inf entries contribute nothing.
double log_sum_exp(const Vector& t) {
  const double m = t.maxCoeff();
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (Eigen::Index k = 0; k < t.size(); ++k) s += std::exp(t(k) - m);
  return m + std::log(s);
}

Vector safe_log(const Vector& w) {
  Vector lw(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    lw(i) = w(i) > 0.0 ? std::log(w(i)) : kNegInf;
  return lw;
}

}  // namespace

void DiscreteMeasure::validate() const {
  if (points.rows() < 1) throw ValidationError("measure: n must be >= 1");
  if (points.rows() != weights.size())
    throw ShapeError("measure: points/weights row count mismatch");
  if (!points.allFinite()) throw ValidationError("measure: non-finite point coordinate");
  if ((weights.array() < 0.0).any())
    throw ValidationError("measure: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw ValidationError("measure: weights must sum to 1 within 1e-12");
}

DiscreteMeasure DiscreteMeasure::uniform(Matrix pts) {
  DiscreteMeasure m;
  const Eigen::Index n = pts.rows();
  m.points = std::move(pts);
  m.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
  return m;
}

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("sinkhorn: epsilon must be > 0");
  if (max_iters < 1) throw ConfigError("sinkhorn: max_iters must be >= 1");
  if (marginal_tol < 0.0) throw ConfigError("sinkhorn: marginal_tol must be >= 0");
  if (p < 1.0 || p > 2.0) throw ConfigError("sinkhorn: cost exponent p must be in [1, 2]");
}

CostMatrix pairwise_cost(const Matrix& X, const Matrix& Y, double p) {
  if (X.cols() != Y.cols())
    throw ShapeError("pairwise_cost: X and Y dimensions differ (" +
                     std::to_string(X.cols()) + " vs " + std::to_string(Y.cols()) + ")");
  if (p < 1.0 || p > 2.0) throw ValidationError("pairwise_cost: p must be in [1, 2]");
  if (!X.allFinite() || !Y.allFinite())
    throw ValidationError("pairwise_cost: non-finite input");

  CostMatrix C;
  C.p = p;
  C.values.resize(X.rows(), Y.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < Y.rows(); ++j) {
      if (p == 2.0) {
        C.values(i, j) = (X.row(i) - Y.row(j)).norm();
      } else if (p == 1.0) {
        C.values(i, j) = (X.row(i) - Y.row(j)).cwiseAbs().sum();
      } else {
        double s = 0.0;
        for (Eigen::Index k = 0; k < X.cols(); ++k)
          s += std::pow(std::abs(X(i, k) - Y(j, k)), p);
        C.values(i, j) = std::pow(s, 1.0 / p);
      }
    }
  }
  return C;
}

SinkhornSolution sinkhorn_solve(const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu,
                                const CostMatrix& C,
                                const SinkhornConfig& cfg) {
  cfg.validate();
  mu.validate();
  nu.validate();
  const Eigen::Index n = mu.size(), m = nu.size();
  if (C.values.rows() != n || C.values.cols() != m)
    throw ShapeError("sinkhorn_solve: cost matrix shape does not match measures");

  const double eps = cfg.epsilon;
  const Vector logmu = safe_log(mu.weights);
  const Vector lognu = safe_log(nu.weights);

  Vector f = Vector::Zero(n), g = Vector::Zero(m);
  Vector t;
  int iters = 0;
  double viol = std::numeric_limits<double>::infinity();

  auto violation = [&](const Vector& fv, const Vector& gv) {
    // Marginals of plan_ij = mu_i nu_j exp((f_i+g_j-C_ij)/eps), in log domain.
    double worst = 0.0;
    t.resize(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j)
        t(j) = lognu(j) + (fv(i) + gv(j) - C.values(i, j)) / eps;
      const double lse = log_sum_exp(t);
      const double row = lse == kNegInf ? 0.0 : mu.weights(i) * std::exp(lse);
      worst = std::max(worst, std::abs(row - mu.weights(i)));
    }
    t.resize(n);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i)
        t(i) = logmu(i) + (fv(i) + gv(j) - C.values(i, j)) / eps;
      const double lse = log_sum_exp(t);
      const double col = lse == kNegInf ? 0.0 : nu.weights(j) * std::exp(lse);
      worst = std::max(worst, std::abs(col - nu.weights(j)));
    }
    return worst;
  };

  for (int it = 0; it < cfg.max_iters; ++it) {
    t.resize(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j)
        t(j) = lognu(j) + (g(j) - C.values(i, j)) / eps;
      f(i) = -eps * log_sum_exp(t);
    }
    t.resize(n);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i)
        t(i) = logmu(i) + (f(i) - C.values(i, j)) / eps;
      g(j) = -eps * log_sum_exp(t);
    }
    iters = it + 1;
    if (!f.allFinite() || !g.allFinite())
      throw NumericError("sinkhorn_solve: non-finite potential at iteration " +
                         std::to_string(iters));
    viol = violation(f, g);
    if (viol <= cfg.marginal_tol) break;
  }

  SinkhornSolution sol;
  sol.f = f;
  sol.g = g;
  sol.iterations_used = iters;
  sol.plan.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      sol.plan(i, j) = mu.weights(i) * nu.weights(j) *
                       std::exp((f(i) + g(j) - C.values(i, j)) / eps);
  if (!sol.plan.allFinite())
    throw NumericError("sinkhorn_solve: non-finite plan after " +
                       std::to_string(iters) + " iterations");
  sol.marginal_violation =
      std::max((sol.plan.rowwise().sum() - mu.weights).cwiseAbs().maxCoeff(),
               (sol.plan.colwise().sum().transpose() - nu.weights).cwiseAbs().maxCoeff());
  sol.dual_value = mu.weights.dot(f) + nu.weights.dot(g);
  sol.primal_cost = (sol.plan.array() * C.values.array()).sum();
  return sol;
}

Vector lp_distance_grad(const Eigen::Ref<const Vector>& x,
                        const Eigen::Ref<const Vector>& y,
                        double p, double c) {
  Vector grad = Vector::Zero(x.size());
  if (c <= 0.0) return grad;  // subgradient 0 at coincidence
  if (p == 2.0) {
    grad = (x - y) / c;
  } else {
    const double scale = std::pow(c, 1.0 - p);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double d = x(k) - y(k);
      if (d != 0.0)
        grad(k) = scale * std::pow(std::abs(d), p - 1.0) * (d > 0.0 ? 1.0 : -1.0);
    }
  }
  return grad;
}

DivergenceResult divergence_with_grad(const Matrix& X, const Matrix& Y,
                                      const Vector& mu, const Vector& nu,
                                      const SinkhornConfig& cfg) {
  DiscreteMeasure a{X, mu};
  DiscreteMeasure b{Y, nu};
  a.validate();
  b.validate();

  const CostMatrix Cxy = pairwise_cost(X, Y, cfg.p);
  const CostMatrix Cxx = pairwise_cost(X, X, cfg.p);
  const CostMatrix Cyy = pairwise_cost(Y, Y, cfg.p);
  const SinkhornSolution xy = sinkhorn_solve(a, b, Cxy, cfg);
  const SinkhornSolution xx = sinkhorn_solve(a, a, Cxx, cfg);
  const SinkhornSolution yy = sinkhorn_solve(b, b, Cyy, cfg);

  DivergenceResult res;
  res.value = xy.dual_value - 0.5 * xx.dual_value - 0.5 * yy.dual_value;

  const Eigen::Index n = X.rows(), m = Y.rows(), d = X.cols();
  res.grad_x = Matrix::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double w = xy.plan(i, j);
      if (w != 0.0)
        res.grad_x.row(i) +=
            w * lp_distance_grad(X.row(i).transpose(), Y.row(j).transpose(),
                                 cfg.p, Cxy.values(i, j)).transpose();
    }
    // x_i enters W(mu,mu) as both row and column; the two appearances cancel
    // the 1/2 factor, leaving the symmetrized plan at full weight.
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = 0.5 * (xx.plan(i, j) + xx.plan(j, i));
      if (w != 0.0 && i != j)
        res.grad_x.row(i) -=
            w * lp_distance_grad(X.row(i).transpose(), X.row(j).transpose(),
                                 cfg.p, Cxx.values(i, j)).transpose();
    }
  }
  return res;
}

double sinkhorn_divergence(const Matrix& X, const Matrix& Y,
                           const Vector& mu, const Vector& nu,
                           const SinkhornConfig& cfg) {
  DiscreteMeasure a{X, mu};
  DiscreteMeasure b{Y, nu};
  a.validate();
  b.validate();
  const SinkhornSolution xy = sinkhorn_solve(a, b, pairwise_cost(X, Y, cfg.p), cfg);
  const SinkhornSolution xx = sinkhorn_solve(a, a, pairwise_cost(X, X, cfg.p), cfg);
  const SinkhornSolution yy = sinkhorn_solve(b, b, pairwise_cost(Y, Y, cfg.p), cfg);
  return xy.dual_value - 0.5 * xx.dual_value - 0.5 * yy.dual_value;
}

Matrix divergence_grad_x(const Matrix& X, const Matrix& Y,
                         const Vector& mu, const Vector& nu,
                         const SinkhornConfig& cfg) {
  return divergence_with_grad(X, Y, mu, nu, cfg).grad_x;
}

double exact_ot_uniform(const CostMatrix& C) {
  const Eigen::Index n = C.values.rows();
  if (n != C.values.cols()) throw ShapeError("exact_ot_uniform: cost must be square");
  if (n > 8) throw ValidationError("exact_ot_uniform: refusing n > 8 (factorial blowup)");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += C.values(i, perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

double energy_mmd(const Matrix& X, const Matrix& Y,
                  const Vector& mu, const Vector& nu, double p) {
  DiscreteMeasure a{X, mu};
  DiscreteMeasure b{Y, nu};
  a.validate();
  b.validate();
  const Matrix Cxy = pairwise_cost(X, Y, p).values;
  const Matrix Cxx = pairwise_cost(X, X, p).values;
  const Matrix Cyy = pairwise_cost(Y, Y, p).values;
  const double cross = mu.transpose() * Cxy * nu;
  const double self_x = mu.transpose() * Cxx * mu;
  const double self_y = nu.transpose() * Cyy * nu;
  return cross - 0.5 * self_x - 0.5 * self_y;
}

double median_cost(const Matrix& values) {
  std::vector<double> v(values.data(), values.data() + values.size());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return v[mid];
}

}  // namespace sinkdem::ot
