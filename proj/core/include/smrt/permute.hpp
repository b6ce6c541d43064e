#pragma once

#include <cstdint>
#include <vector>

#include "smrt/resample.hpp"

namespace smrt {

enum class RefKind { Permutation, Resampling };

// Which estimate feeds the reference statistics: the regularized betaHat
// (SMRT) or the unregularized betaTilde (MRT comparator).
enum class RefEstimator { Sparse, Initial };

// Null reference values t*_{j,m,b}, stored as B matrices of shape p x M.
struct ReferenceDistribution {
  RefKind kind = RefKind::Permutation;
  std::vector<MatrixXd> values;  // values[b](j, m) >= 0
  std::uint64_t seed = 0;
  int B = 0;

  int p() const { return values.empty() ? 0 : static_cast<int>(values[0].rows()); }
  int M() const { return values.empty() ? 0 : static_cast<int>(values[0].cols()); }
};

struct PermutationOptions {
  int threads = 1;
  double maxFailFraction = 0.10;
};

// Reference for outcome m: per draw, permute only column m, refit that
// marginal model (others come from the cache), re-solve the joint lasso at
// the original lambda with weights from the permuted betaTilde, and score
// t*_j = sqrt(n) |betaHat_j^(m)| / sigmaTilde_j^(m) with the original-data
// sigmaTilde. Draw (m, b) has its own stream, so a standalone run of one
// outcome equals the matching slice of build_reference.
MatrixXd permutation_reference(const Dataset& ds,
                               const std::vector<MarginalFit>& fits,
                               double lambda, int m, int B, std::uint64_t seed,
                               RefEstimator est = RefEstimator::Sparse,
                               const PermutationOptions& opts = {});  // p x B

ReferenceDistribution build_reference(const Dataset& ds,
                                      const std::vector<MarginalFit>& fits,
                                      double lambda, int B, std::uint64_t seed,
                                      RefEstimator est = RefEstimator::Sparse,
                                      const PermutationOptions& opts = {});

// Both estimators from one pass over the permuted refits (the marginal
// refit dominates the cost and is shared).
struct ReferencePair {
  ReferenceDistribution sparse;
  ReferenceDistribution initial;
};
ReferencePair build_reference_pair(const Dataset& ds,
                                   const std::vector<MarginalFit>& fits,
                                   double lambda, int B, std::uint64_t seed,
                                   const PermutationOptions& opts = {});

// Resampling reference: t*_{j,m,b} = sqrt(n) |draw_b(j,m) - center(j,m)| /
// sigmaTilde(j,m), using betaHatStar draws for Sparse (center betaHat) or
// betaTildeStar for Initial (center betaTilde).
ReferenceDistribution resampling_reference(const PerturbDraws& draws,
                                           const CoefMatrix& center,
                                           const MatrixXd& sigmaTilde,
                                           RefEstimator est = RefEstimator::Sparse);

}  // namespace smrt
