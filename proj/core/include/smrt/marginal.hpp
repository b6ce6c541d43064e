#pragma once

#include <vector>

#include "smrt/types.hpp"

namespace smrt {

// Maximum-likelihood fit of one marginal cumulative-logit model
//   P(level <= l | x) = expit(threshold_{l+1} - x' beta),
// so positive beta shifts the outcome upward on its latent scale. Binary
// outcomes are the L = 2 case of the same path. Thresholds are profiled
// out of the information and the per-subject scores.
struct MarginalFit {
  int m = 0;
  VectorXd betaTilde;    // p
  VectorXd thresholds;   // L-1, strictly increasing
  MatrixXd profileInfo;  // p x p observed information for beta, thresholds profiled out
  MatrixXd scores;       // n x p profiled per-subject score contributions
  VectorXd sigmaTilde;   // p, sqrt(n * diag(profileInfo^{-1}))
  double logLik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ridged = false;   // separation guard engaged at least once
  std::vector<double> llTrace;  // log-likelihood after each Newton step
};

// Core fit on an explicit design; fit_marginal is the Dataset-facing wrapper.
MarginalFit fit_cumulative_logit(const MatrixXd& X, const OutcomeColumn& col);

MarginalFit fit_marginal(const Dataset& ds, int m);

// Log-likelihood at fixed beta with thresholds maximized out (used by
// finite-difference checks against profileInfo).
double profile_loglik(const MatrixXd& X, const OutcomeColumn& col,
                      const VectorXd& beta);
double profile_loglik(const Dataset& ds, int m, const VectorXd& beta);

// Joint log-likelihood and its analytic gradient at an arbitrary
// (beta, thresholds) point; thresholds must be strictly increasing.
struct LoglikDerivs {
  double logLik = 0.0;
  VectorXd gradBeta;
  VectorXd gradThresholds;
};
LoglikDerivs marginal_loglik(const MatrixXd& X, const OutcomeColumn& col,
                             const VectorXd& beta, const VectorXd& thresholds);

// Symmetric positive-semidefinite square root via eigendecomposition:
// result' * result == info. Eigenvalues below -1e-10 * ||info|| are an error;
// tiny negatives are clipped to zero.
MatrixXd half_matrix(const MatrixXd& info);

// Stacks sigmaTilde vectors into the p x M matrix used by the test statistics.
MatrixXd sigma_tilde_matrix(const std::vector<MarginalFit>& fits);

}  // namespace smrt
