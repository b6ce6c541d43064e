#pragma once

#include <limits>
#include <vector>

#include "smrt/quadratic.hpp"
#include "smrt/types.hpp"

namespace smrt {

// Penalty sum_j d_j + lambda * sum_jm w_jm |alpha_jm| over the decomposition
// beta_jm = d_j * alpha_jm, with adaptive weights w_jm = |betaTilde_jm|^{-1}
// (infinite exactly where betaTilde is zero, which forces the coefficient out).
struct PenaltySpec {
  double lambda = 0.0;
  MatrixXd weights;    // p x M, positive or +infinity
  bool nonneg = false; // constrain d_j >= 0 instead of the signed update

  static PenaltySpec fromBetaTilde(const CoefMatrix& betaTilde, double lambda,
                                   bool nonneg = false);
};

struct SparseFit {
  CoefMatrix betaHat;  // p x M, = d_j * alpha_jm * |betaTilde_jm| entrywise
  VectorXd d;          // p, reported nonnegative with max_m |alpha_jm| = 1
  MatrixXd alpha;      // p x M
  double lambda = 0.0;
  int df = 0;          // nonzero entries of betaHat
  double bic = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  std::vector<double> objTrace;  // objective after every half-step
};

struct WeightedLassoResult {
  VectorXd coef;
  bool converged = false;
  int sweeps = 0;
};

// argmin_b ||response - design * b||^2 + lam * sum_k penWeights_k |b_k| by
// cyclic coordinate descent with exact soft-threshold updates. Infinite
// weights force the coefficient to zero. lam = 0 falls back to the
// minimum-norm least-squares solution on the finite-weight columns.
WeightedLassoResult weighted_lasso(const MatrixXd& design, const VectorXd& response,
                                   const VectorXd& penWeights, double lam,
                                   const VectorXd* init = nullptr,
                                   bool nonneg = false);

// Alternating adaptive-lasso minimization of
//   quad_loss(beta) + sum_j |d_j| + lambda * sum_jm |alpha_jm|
// over beta_jm = d_j * alpha_jm * s_jm with s_jm = 1 / w_jm, starting from
// d = 1. alphaInit warm-starts the alpha block (path fitting).
SparseFit fit_hierarchical(const QuadraticSystem& sys, const PenaltySpec& pen,
                           const MatrixXd* alphaInit = nullptr);

// Penalty with d profiled out: sum_j 2 sqrt(lambda * S_j) where
// S_j = sum_m w_jm |beta_jm| (the minimizing d_j is sqrt(lambda * S_j)).
// A nonzero coefficient at an infinite weight yields +infinity.
double profiled_penalty(const CoefMatrix& beta, const MatrixXd& weights,
                        double lambda);

// Smallest lambda with an all-zero fit, located by bisection from an
// analytic upper bound.
double lambda_max(const QuadraticSystem& sys, const PenaltySpec& penTemplate);

// points log-spaced values from lambda_max down to lambda_max * ratio.
std::vector<double> default_lambda_grid(const QuadraticSystem& sys,
                                        const PenaltySpec& penTemplate,
                                        int points = 50, double ratio = 1e-4);

// Modified-BIC penalty multiplier min{n^0.1, log n}.
double bic_multiplier(int n);

// Fits every lambda in the grid (warm-started along the descending path) and
// returns the fit minimizing quad_loss/n + bic_multiplier(n) * df / n; ties
// break toward larger lambda.
SparseFit tune_bic(const QuadraticSystem& sys, const std::vector<double>& grid,
                   bool nonneg = false);
SparseFit tune_bic(const QuadraticSystem& sys);

}  // namespace smrt
