#pragma once

#include <vector>

#include "smrt/marginal.hpp"
#include "smrt/types.hpp"

namespace smrt {

// Blockwise least-squares surrogate of the summed profile log-likelihoods:
// loss(beta) = sum_m || half_m * (betaTilde_m - beta_m) ||^2. Blocks are
// stored per outcome; the Mp x Mp block diagonal is never materialized.
struct QuadraticSystem {
  std::vector<MatrixXd> halves;     // M symmetric roots, p x p
  std::vector<MatrixXd> infos;      // M information matrices (half' * half)
  std::vector<VectorXd> responses;  // half_m * betaTilde_m
  CoefMatrix betaTilde;             // p x M
  int n = 0;

  int p() const { return static_cast<int>(betaTilde.rows()); }
  int M() const { return static_cast<int>(betaTilde.cols()); }

  // Copy with outcome block m replaced (used by the permutation reference,
  // which refits a single outcome and reuses the others).
  QuadraticSystem withBlock(int m, const MatrixXd& info, const VectorXd& betaTildeM) const;
};

QuadraticSystem assemble(const std::vector<MarginalFit>& fits);

double quad_loss(const QuadraticSystem& sys, const CoefMatrix& beta);

}  // namespace smrt
