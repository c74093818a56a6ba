#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sinkdem/ot.hpp"
#include "sinkdem/rng.hpp"

using namespace sinkdem;
using namespace sinkdem::ot;

namespace {

Matrix random_points(Rng& rng, int n, int d, double lo = -1.0, double hi = 1.0) {
  Matrix X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = rng.uniform(lo, hi);
  return X;
}

Vector random_simplex(Rng& rng, int n) {
  Vector w(n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    w(i) = 0.05 + rng.uniform();
    s += w(i);
  }
  w /= s;
  // renormalize exactly enough for the 1e-12 invariant
  w(n - 1) += 1.0 - w.sum();
  return w;
}

// Independent distance oracle: explicit double loop, no Eigen reductions.
double lp_dist_ref(const Matrix& X, int i, const Matrix& Y, int j, double p) {
  double s = 0.0;
  for (int k = 0; k < X.cols(); ++k)
    s += std::pow(std::abs(X(i, k) - Y(j, k)), p);
  return std::pow(s, 1.0 / p);
}

// Recursive permutation enumerator; intentionally a different traversal
// order than std::next_permutation.
void perm_rec(const Matrix& C, std::vector<bool>& used, int row, double acc,
              double& best) {
  const int n = static_cast<int>(C.rows());
  if (row == n) {
    best = std::min(best, acc);
    return;
  }
  for (int j = n - 1; j >= 0; --j) {
    if (used[j]) continue;
    used[j] = true;
    perm_rec(C, used, row + 1, acc + C(row, j), best);
    used[j] = false;
  }
}

double exact_ot_uniform_ref(const Matrix& C) {
  std::vector<bool> used(C.rows(), false);
  double best = std::numeric_limits<double>::infinity();
  perm_rec(C, used, 0, 0.0, best);
  return best / static_cast<double>(C.rows());
}

SinkhornConfig tight_cfg(double eps, int iters = 10000, double p = 2.0) {
  SinkhornConfig cfg;
  cfg.epsilon = eps;
  cfg.max_iters = iters;
  cfg.marginal_tol = 1e-12;
  cfg.p = p;
  return cfg;
}

}  // namespace

TEST_CASE("pairwise_cost hand cases") {
  Matrix X(2, 1), Y(2, 1);
  X << 0, 1;
  Y << 0, 2;
  const CostMatrix C = pairwise_cost(X, Y, 1.0);
  CHECK(C.values(0, 0) == doctest::Approx(0.0));
  CHECK(C.values(0, 1) == doctest::Approx(2.0));
  CHECK(C.values(1, 0) == doctest::Approx(1.0));
  CHECK(C.values(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("pairwise_cost zero diagonal for X == Y") {
  Rng rng(11);
  const Matrix X = random_points(rng, 6, 3);
  for (double p : {1.0, 1.5, 2.0}) {
    const CostMatrix C = pairwise_cost(X, X, p);
    for (int i = 0; i < 6; ++i) CHECK(C.values(i, i) == doctest::Approx(0.0));
  }
}

TEST_CASE("pairwise_cost matches double-loop oracle") {
  Rng rng(12);
  const Matrix X = random_points(rng, 5, 3);
  const Matrix Y = random_points(rng, 4, 3);
  const CostMatrix C = pairwise_cost(X, Y, 2.0);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(C.values(i, j) == doctest::Approx(lp_dist_ref(X, i, Y, j, 2.0)).epsilon(1e-12));
}

TEST_CASE("pairwise_cost errors") {
  Matrix X(2, 2), Y(2, 3);
  X.setZero();
  Y.setZero();
  CHECK_THROWS_AS(pairwise_cost(X, Y, 2.0), ShapeError);
  Matrix Z(2, 2);
  Z.setZero();
  Z(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pairwise_cost(Z, Z, 2.0), ValidationError);
}

TEST_CASE("sinkhorn_solve forced single-atom coupling") {
  Matrix X(1, 1), Y(1, 1);
  X << 0;
  Y << 3;
  const auto mu = DiscreteMeasure::uniform(X);
  const auto nu = DiscreteMeasure::uniform(Y);
  const CostMatrix C = pairwise_cost(X, Y, 1.0);
  const auto sol = sinkhorn_solve(mu, nu, C, tight_cfg(0.5, 100, 1.0));
  CHECK(sol.plan(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sol.primal_cost == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(sol.dual_value == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("sinkhorn_solve identity upper bound for mu == nu") {
  Rng rng(13);
  const Matrix X = random_points(rng, 6, 2);
  const auto mu = DiscreteMeasure::uniform(X);
  const CostMatrix C = pairwise_cost(X, X, 2.0);
  const double med = median_cost(C.values);
  const auto sol = sinkhorn_solve(mu, mu, C, tight_cfg(1e-3, 20000));
  CHECK(sol.dual_value <= 1e-2 * med);
  CHECK(sol.dual_value >= -1e-9);
}

TEST_CASE("sinkhorn_solve near exact OT at small epsilon") {
  Rng rng(14);
  Matrix C(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) C(i, j) = rng.uniform(0.1, 2.0);
  CostMatrix cost{C, 2.0};
  const double exact = exact_ot_uniform(cost);
  Matrix pts(4, 1);
  pts << 0, 1, 2, 3;  // placeholder support; solver only reads the cost
  const auto mu = DiscreteMeasure::uniform(pts);
  auto cfg = tight_cfg(1e-3 * median_cost(C), 5000);
  const auto sol = sinkhorn_solve(mu, mu, cost, cfg);
  CHECK(std::abs(sol.primal_cost - exact) <= 0.02 * exact);
}

TEST_CASE("sinkhorn_solve plan reconstruction identity and marginals") {
  Rng rng(15);
  const Matrix X = random_points(rng, 5, 2);
  const Matrix Y = random_points(rng, 7, 2);
  DiscreteMeasure mu{X, random_simplex(rng, 5)};
  DiscreteMeasure nu{Y, random_simplex(rng, 7)};
  const CostMatrix C = pairwise_cost(X, Y, 2.0);
  SinkhornConfig cfg = tight_cfg(0.1, 10000);
  cfg.marginal_tol = 1e-9;
  const auto sol = sinkhorn_solve(mu, nu, C, cfg);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) {
      const double expect = mu.weights(i) * nu.weights(j) *
                            std::exp((sol.f(i) + sol.g(j) - C.values(i, j)) / cfg.epsilon);
      CHECK(sol.plan(i, j) == expect);
    }
  CHECK((sol.plan.rowwise().sum() - mu.weights).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((sol.plan.colwise().sum().transpose() - nu.weights).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(sol.marginal_violation <= 1e-9);
}

TEST_CASE("sinkhorn_solve config and shape errors") {
  Matrix X(2, 1);
  X << 0, 1;
  const auto mu = DiscreteMeasure::uniform(X);
  const CostMatrix C = pairwise_cost(X, X, 2.0);
  SinkhornConfig bad = tight_cfg(0.1);
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(sinkhorn_solve(mu, mu, C, bad), ConfigError);
  Matrix Y(3, 1);
  Y << 0, 1, 2;
  const auto nu = DiscreteMeasure::uniform(Y);
  CHECK_THROWS_AS(sinkhorn_solve(mu, nu, C, tight_cfg(0.1)), ShapeError);
}

TEST_CASE("divergence vanishes at equal measures") {
  Rng rng(16);
  const Matrix X = random_points(rng, 6, 2);
  const Vector w = random_simplex(rng, 6);
  // identical sub-problems cancel exactly regardless of convergence depth
  const double s = sinkhorn_divergence(X, X, w, w, tight_cfg(0.1, 500));
  CHECK(std::abs(s) <= 1e-9);
}

TEST_CASE("divergence approaches energy MMD at huge epsilon") {
  Rng rng(17);
  const Matrix X = random_points(rng, 6, 2);
  const Matrix Y = random_points(rng, 6, 2);
  const Vector mu = random_simplex(rng, 6);
  const Vector nu = random_simplex(rng, 6);
  const double mmd = energy_mmd(X, Y, mu, nu, 1.5);
  const double s = sinkhorn_divergence(X, Y, mu, nu, tight_cfg(1e6, 5000, 1.5));
  CHECK(std::abs(s - mmd) <= 1e-3 * std::abs(mmd));
}

TEST_CASE("divergence approaches exact OT at small epsilon") {
  Rng rng(18);
  const Matrix X = random_points(rng, 5, 2);
  const Matrix Y = random_points(rng, 5, 2);
  const Vector u = Vector::Constant(5, 0.2);
  const CostMatrix C = pairwise_cost(X, Y, 2.0);
  const double exact = exact_ot_uniform(C);
  const double eps = 1e-3 * median_cost(C.values);
  const double s = sinkhorn_divergence(X, Y, u, u, tight_cfg(eps, 20000));
  CHECK(std::abs(s - exact) <= 0.02 * exact);
}

TEST_CASE("divergence asymptotics in epsilon") {
  Rng rng(19);
  const Matrix X = random_points(rng, 5, 2);
  const Matrix Y = random_points(rng, 5, 2);
  const Vector u = Vector::Constant(5, 0.2);
  const CostMatrix C = pairwise_cost(X, Y, 2.0);
  const double exact = exact_ot_uniform(C);
  const double med = median_cost(C.values);
  std::vector<double> gaps;
  for (double scale : {1.0, 0.1, 0.01, 0.001}) {
    const double s = sinkhorn_divergence(X, Y, u, u, tight_cfg(scale * med, 50000));
    gaps.push_back(std::abs(s - exact));
  }
  int bad_steps = 0;
  for (std::size_t k = 1; k < gaps.size(); ++k)
    if (gaps[k] > gaps[k - 1] + 1e-12 && gaps[k] - gaps[k - 1] > 1e-6) ++bad_steps;
  CHECK(bad_steps == 0);
}

TEST_CASE("divergence axioms over random pairs") {
  Rng rng(20);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(15));
    const int m = 2 + static_cast<int>(rng.below(15));
    const Matrix X = random_points(rng, n, 2);
    const Matrix Y = random_points(rng, m, 2);
    const Vector mu = random_simplex(rng, n);
    const Vector nu = random_simplex(rng, m);
    const double med = median_cost(pairwise_cost(X, Y, 2.0).values);
    const auto cfg = tight_cfg(med, 5000);
    const double sxy = sinkhorn_divergence(X, Y, mu, nu, cfg);
    const double syx = sinkhorn_divergence(Y, X, nu, mu, cfg);
    CHECK(std::abs(sxy - syx) <= 1e-9);
    CHECK(sxy >= -1e-9);
    const double sxx = sinkhorn_divergence(X, X, mu, mu, cfg);
    CHECK(std::abs(sxx) <= 1e-9);
  }
}

TEST_CASE("divergence_grad_x zero at coincidence") {
  Rng rng(21);
  const Matrix X = random_points(rng, 5, 2);
  const Vector w = random_simplex(rng, 5);
  const double med = median_cost(pairwise_cost(X, X, 2.0).values);
  const Matrix g = divergence_grad_x(X, X, w, w, tight_cfg(med, 5000));
  CHECK(g.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("divergence_grad_x single atoms give unit direction") {
  Matrix X(1, 3), Y(1, 3);
  X << 1.0, -2.0, 0.5;
  Y << -1.0, 0.0, 2.0;
  const Vector one = Vector::Ones(1);
  const Matrix g = divergence_grad_x(X, Y, one, one, tight_cfg(0.1, 200));
  const Vector expect = (X.row(0) - Y.row(0)).normalized().transpose();
  CHECK((g.row(0).transpose() - expect).norm() <= 1e-9);
}

TEST_CASE("divergence_grad_x matches central differences") {
  Rng rng(22);
  const double h = 1e-5;
  for (int trial = 0; trial < 4; ++trial) {
    const Matrix X0 = random_points(rng, 5, 2);
    const Matrix Y = random_points(rng, 5, 2);
    const Vector mu = random_simplex(rng, 5);
    const Vector nu = random_simplex(rng, 5);
    const auto cfg = tight_cfg(0.1, 20000);
    const Matrix g = divergence_grad_x(X0, Y, mu, nu, cfg);
    double max_rel = 0.0;
    const double scale = g.cwiseAbs().maxCoeff();
    for (int i = 0; i < 5; ++i)
      for (int k = 0; k < 2; ++k) {
        Matrix Xp = X0, Xm = X0;
        Xp(i, k) += h;
        Xm(i, k) -= h;
        const double fd = (sinkhorn_divergence(Xp, Y, mu, nu, cfg) -
                           sinkhorn_divergence(Xm, Y, mu, nu, cfg)) / (2 * h);
        max_rel = std::max(max_rel, std::abs(fd - g(i, k)) / std::max(scale, 1e-12));
      }
    CHECK(max_rel <= 1e-4);
  }
}

TEST_CASE("exact_ot_uniform hand cases and cross-check") {
  Matrix C1(2, 2);
  C1 << 0, 1, 1, 0;
  CHECK(exact_ot_uniform({C1, 2.0}) == doctest::Approx(0.0));
  Matrix C2(2, 2);
  C2 << 2, 1, 1, 2;
  CHECK(exact_ot_uniform({C2, 2.0}) == doctest::Approx(1.0));

  Rng rng(23);
  Matrix C(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) C(i, j) = rng.uniform(0.0, 3.0);
  CHECK(exact_ot_uniform({C, 2.0}) == doctest::Approx(exact_ot_uniform_ref(C)).epsilon(1e-12));

  Matrix big = Matrix::Zero(9, 9);
  CHECK_THROWS_AS(exact_ot_uniform({big, 2.0}), ValidationError);
}

TEST_CASE("energy_mmd hand cases and reference") {
  Matrix X(1, 1), Y(1, 1);
  X << 0;
  Y << 2;
  const Vector one = Vector::Ones(1);
  CHECK(energy_mmd(X, X, one, one, 1.5) == doctest::Approx(0.0));
  CHECK(energy_mmd(X, Y, one, one, 1.5) == doctest::Approx(2.0));

  Rng rng(24);
  const Matrix A = random_points(rng, 10, 3);
  const Matrix B = random_points(rng, 10, 3);
  const Vector mu = random_simplex(rng, 10);
  const Vector nu = random_simplex(rng, 10);
  // independent reference: scalar accumulation over explicit loops
  double cross = 0, sx = 0, sy = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      cross += mu(i) * nu(j) * lp_dist_ref(A, i, B, j, 1.5);
      sx += mu(i) * mu(j) * lp_dist_ref(A, i, A, j, 1.5);
      sy += nu(i) * nu(j) * lp_dist_ref(B, i, B, j, 1.5);
    }
  const double ref = cross - 0.5 * sx - 0.5 * sy;
  CHECK(energy_mmd(A, B, mu, nu, 1.5) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(energy_mmd(A, B, mu, nu, 1.5) >= 0.0);
}

TEST_CASE("log-domain stability at tiny epsilon and large costs") {
  Rng rng(25);
  Matrix X = random_points(rng, 8, 1, 0.0, 50.0);
  Matrix Y = random_points(rng, 8, 1, 0.0, 50.0);
  X(0, 0) = 0.0;
  Y(0, 0) = 100.0;  // stretch costs to [0, 100]
  const auto mu = DiscreteMeasure::uniform(X);
  const auto nu = DiscreteMeasure::uniform(Y);
  const CostMatrix C = pairwise_cost(X, Y, 2.0);
  SinkhornConfig cfg = tight_cfg(1e-6, 60);
  cfg.marginal_tol = 0.0;
  const auto sol = sinkhorn_solve(mu, nu, C, cfg);
  CHECK(sol.f.allFinite());
  CHECK(sol.g.allFinite());
  CHECK(sol.plan.allFinite());
  CHECK(std::isfinite(sol.dual_value));
  CHECK(std::isfinite(sol.primal_cost));
}

TEST_CASE("marginal feasibility invariant") {
  Rng rng(26);
  const Matrix X = random_points(rng, 9, 2);
  const Matrix Y = random_points(rng, 7, 2);
  DiscreteMeasure mu{X, random_simplex(rng, 9)};
  DiscreteMeasure nu{Y, random_simplex(rng, 7)};
  SinkhornConfig cfg;
  cfg.epsilon = 0.1;
  cfg.max_iters = 10000;
  cfg.marginal_tol = 1e-9;
  const auto sol = sinkhorn_solve(mu, nu, pairwise_cost(X, Y, 2.0), cfg);
  CHECK((sol.plan.rowwise().sum() - mu.weights).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((sol.plan.colwise().sum().transpose() - nu.weights).cwiseAbs().maxCoeff() <= 1e-8);
}
