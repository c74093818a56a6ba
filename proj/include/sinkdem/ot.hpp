#pragma once

#include <Eigen/Dense>

#include "sinkdem/errors.hpp"

namespace sinkdem::ot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Weighted point cloud: n support locations in R^d plus a probability vector.
struct DiscreteMeasure {
  Matrix points;   // n x d
  Vector weights;  // n, >= 0, sums to 1 within 1e-12

  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
  void validate() const;

  static DiscreteMeasure uniform(Matrix pts);
};

// Pairwise L_p distances between two supports.
struct CostMatrix {
  Matrix values;  // n x m, nonnegative
  double p = 2.0; // cost exponent, 1 <= p <= 2
};

struct SinkhornConfig {
  double epsilon = 0.1;      // entropic weight
  int max_iters = 10;        // Sinkhorn sweeps T
  double marginal_tol = 1e-6;// early stop on L-inf marginal violation
  double p = 2.0;            // cost exponent used when building costs

  void validate() const;
};

struct SinkhornSolution {
  Vector f;  // dual potential on the row measure
  Vector g;  // dual potential on the column measure
  Matrix plan;
  double dual_value = 0.0;   // mu.f + nu.g, the canonical regularized cost
  double primal_cost = 0.0;  // <plan, C>
  int iterations_used = 0;
  double marginal_violation = 0.0;
};

// C[i][j] = (sum_k |X[i][k] - Y[j][k]|^p)^(1/p).
CostMatrix pairwise_cost(const Matrix& X, const Matrix& Y, double p);

// Log-domain Sinkhorn with alternating softmin updates
//   f_i <- -eps log sum_j nu_j exp((g_j - C_ij)/eps)
//   g_j <- -eps log sum_i mu_i exp((f_i - C_ij)/eps)
// run until max_iters or the plan's marginal violation drops below tol.
SinkhornSolution sinkhorn_solve(const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu,
                                const CostMatrix& C,
                                const SinkhornConfig& cfg);

// Debiased divergence S = W(mu,nu) - W(mu,mu)/2 - W(nu,nu)/2, all three
// solves sharing cfg. Zero at equal measures, symmetric, nonnegative.
double sinkhorn_divergence(const Matrix& X, const Matrix& Y,
                           const Vector& mu, const Vector& nu,
                           const SinkhornConfig& cfg);

// Envelope-theorem gradient of S with respect to the row support X:
// plans are treated as fixed at convergence, no differentiation through
// the iterations. grad[i] = sum_j plan_ij dC(x_i,y_j)/dx_i minus the
// symmetrized self-plan term from W(mu,mu).
Matrix divergence_grad_x(const Matrix& X, const Matrix& Y,
                         const Vector& mu, const Vector& nu,
                         const SinkhornConfig& cfg);

struct DivergenceResult {
  double value = 0.0;
  Matrix grad_x;  // n x d
};

// Value and gradient from one set of solves (training path).
DivergenceResult divergence_with_grad(const Matrix& X, const Matrix& Y,
                                      const Vector& mu, const Vector& nu,
                                      const SinkhornConfig& cfg);

// Brute-force OT value for square costs with uniform marginals:
// min over permutations of (1/n) sum_i C[i][sigma(i)]. Refuses n > 8.
double exact_ot_uniform(const CostMatrix& C);

// Energy-distance MMD with kernel -|.|_p:
// E_{mu x nu} C - E_{mu x mu} C / 2 - E_{nu x nu} C / 2.
double energy_mmd(const Matrix& X, const Matrix& Y,
                  const Vector& mu, const Vector& nu, double p);

// Median of all cost entries; the usual scale reference for epsilon.
double median_cost(const Matrix& values);

// d||x - y||_p / dx evaluated at distance c (0 at coincidence for p < 2,
// the documented subgradient choice).
Vector lp_distance_grad(const Eigen::Ref<const Vector>& x,
                        const Eigen::Ref<const Vector>& y,
                        double p, double c);

}  // namespace sinkdem::ot
