#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smrt/dataset.hpp"
#include "smrt/rng.hpp"
#include "smrt/stepdown.hpp"

namespace smrt {

// Synthetic design: genotype-like predictors in {0,1,2}, outcomes from
// marginal proportional-odds models with exchangeable latent correlation,
// discretized to quantile levels.
struct SimConfig {
  int n = 250, p = 30, M = 4;
  double maf = 0.15;   // allele frequency for the genotype probabilities
  double rho = 0.15;   // exchangeable correlation weight
  CoefMatrix beta0;    // p x M true effects (empty = paper_beta0 for 30 x 4)
  int levels = 10;
  int reps = 200;
  int B = 200;         // permutation draws per reference
  int ciB = 0;         // perturbation draws for CIs (0 = use B)
  double alpha = 0.05;
  double psi = -1.0;   // < 0 means 1 - alpha
  std::vector<int> kList{1};
  std::uint64_t seed = 1;
  int threads = 1;

  bool doEstimation = true;        // bias / SD / sparsity aggregation
  bool doResampleCis = false;      // perturbation draws + CI coverage
  bool doPermutationTests = false; // references + SMRT/MRT/Sup/Bonferroni
  bool doMarginalComparator = false;  // per-outcome adaptive-lasso fits
  std::vector<double> lambdaGrid;  // empty = default path per replicate

  void validate() const;
  double psiEffective() const { return psi > 0.0 ? psi : 1.0 - alpha; }
};

// The 30 x 4 block design: effects of 1 on outcomes 1 and 3, 1/2 on
// outcomes 2 and 4, with active counts (20, 16, 12, 8) and ten fully null
// predictors.
CoefMatrix paper_beta0();

Dataset generate(const SimConfig& cfg, RngStream& rng);

// Aggregates per distinct |beta0| value.
struct GroupEstimation {
  double beta0Value = 0.0;
  int entries = 0;
  double biasHat = 0.0, biasTilde = 0.0;          // mean(est - beta0)
  double absBiasHat = 0.0, absBiasTilde = 0.0;    // mean |per-entry bias|
  double absBiasPairedSe = 0.0;                   // SE of absBiasHat - absBiasTilde
  double empiricalSdHat = 0.0;                    // mean per-entry SD of betaHat
  double meanSigmaHat = 0.0;                      // mean resampling SE
  double meanAsympSe = 0.0;                       // mean sigmaTilde / sqrt(n)
  double coverAsymp = 0.0, coverNormal = 0.0, coverQuantile = 0.0;
};

struct SparsityMetrics {
  double nullZeroFrac = 0.0;            // truly-null entries estimated exactly 0
  double nullPredictorElimRate = 0.0;   // fully-null predictors with a zero row
  double meanDf = 0.0;
  double meanLambda = 0.0;
};

struct MethodTesting {
  std::string method;  // "SMRT" | "MRT" | "Sup" | "Bonferroni"
  int k = 1;
  double fwer = 0.0;      // mean over (rep, predictor with >=1 null) of any false rejection
  double avgPower = 0.0;  // mean over (rep, non-null pair) of rejection
  std::vector<double> perRepFwer;   // one value per replicate
  std::vector<double> perRepPower;  // one value per replicate
  // Power by how many outcomes the predictor truly regulates.
  struct Pattern {
    int numAssociated = 0;
    std::vector<double> perOutcomePower;  // indexed by outcome, NaN if null there
    double jointPower = 0.0;              // all truly non-null outcomes rejected
  };
  std::vector<Pattern> patterns;
};

struct ComparatorMetrics {
  // Per-outcome adaptive-lasso fits (no joint penalty), for the
  // joint-vs-marginal comparison.
  double nullZeroFrac = 0.0;
  double nullPredictorElimRate = 0.0;
  double nonNullSelectionRate = 0.0;  // non-null entries kept nonzero
  double jointNonNullSelectionRate = 0.0;  // same, for the joint fit
};

struct ExperimentMetrics {
  int n = 0, p = 0, M = 0, reps = 0, B = 0;
  double alpha = 0.0, psi = 0.0;
  std::uint64_t seed = 0;
  std::vector<GroupEstimation> groups;
  SparsityMetrics sparsity;
  std::vector<MethodTesting> methods;
  ComparatorMetrics comparator;
  bool hasComparator = false;
  bool hasCis = false;
  bool hasTests = false;
};

ExperimentMetrics run_experiment(const SimConfig& cfg);

// Empirical FWER helper: fraction of predictors with at least one false
// rejection, among predictors that have at least one true null hypothesis.
double fwer_fraction(const std::vector<std::vector<int>>& rejected,
                     const CoefMatrix& beta0);

// Average rejection rate over truly non-null hypotheses.
double power_fraction(const std::vector<std::vector<int>>& rejected,
                      const CoefMatrix& beta0);

}  // namespace smrt
