#pragma once

#include <string>
#include <vector>

#include "smrt/permute.hpp"
#include "smrt/types.hpp"

namespace smrt {

struct TestResult {
  std::vector<std::vector<int>> rejected;  // per predictor, sorted outcome indices
  MatrixXd adjP;    // p x M in (0,1]; NaN when not computed
  MatrixXd tStats;  // p x M
  int k = 1;
  double psi = 0.95;
  std::string method;  // "SMRT" | "MRT" | "Sup" | "Bonferroni"
  RefKind refKind = RefKind::Permutation;
};

// t_{j,m} = sqrt(n) |betaHat_{j,m}| / sigmaTilde_{j,m}.
MatrixXd test_stats(const CoefMatrix& betaHat, const MatrixXd& sigmaTilde, int n);

// psi-quantile of the per-draw maxima over omega for predictor j, as the
// ceil((B+1) psi)-th order statistic of B values (conservative finite-B
// rule); +infinity when that index exceeds B.
double sup_quantile(const ReferenceDistribution& ref, int j,
                    const std::vector<int>& omega, double psi);

// Stepdown over one predictor's M hypotheses. k = 1 is the plain stepdown;
// k > 1 holds out the k-1 largest statistics and a first rejection rejects
// them jointly. Ties in the t-ordering break by ascending outcome index.
// refRow is M x B: refRow(m, b) = t*_{j,m,b}.
std::vector<int> stepdown_single(const VectorXd& tRow, const MatrixXd& refRow,
                                 double psi, int k);

// Smallest alpha on the grid {(1+i)/(B+1)} at which the stepdown with
// psi = 1 - alpha rejects each hypothesis; 1 when never rejected. Adjusted
// p-values are non-decreasing along the rejection order.
VectorXd adjusted_pvalues(const VectorXd& tRow, const MatrixXd& refRow, int k);

// Per-predictor SMRT: stepdown_single row by row plus adjusted p-values.
TestResult smrt_test(const MatrixXd& t, const ReferenceDistribution& ref,
                     double psi, int k, bool withAdjP = true);

enum class AllPredictorMode { Joint, PerPredictorAlphaOverP };

// FWER control across all p*M hypotheses: a joint stepdown over the pooled
// statistics (with per-predictor hold-outs when k > 1), or the conservative
// per-predictor stepdown at level alpha / p.
TestResult stepdown_all(const MatrixXd& t, const ReferenceDistribution& ref,
                        double psi, int k,
                        AllPredictorMode mode = AllPredictorMode::Joint);

// Comparators at familywise level alpha (psi = 1 - alpha):
//   Sup        single-step: reject (j,m) iff t_{j,m} > c_j^{1..M}(1-alpha);
//   Bonferroni marginal permutation p-value < alpha/M per predictor
//              (alpha/(p M) in all-predictor mode);
//   MRT        the full stepdown run on the unregularized statistics and an
//              unregularized reference (built by the caller).
TestResult sup_test(const MatrixXd& t, const ReferenceDistribution& ref,
                    double alpha);
TestResult bonferroni_test(const MatrixXd& t, const ReferenceDistribution& ref,
                           double alpha, bool allPredictors = false);
TestResult mrt_test(const MatrixXd& tInitial, const ReferenceDistribution& refInitial,
                    double psi, int k, bool withAdjP = true);

// M x B slice of a reference for one predictor.
MatrixXd reference_row(const ReferenceDistribution& ref, int j);

}  // namespace smrt
