#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "smrt/hier_lasso.hpp"
#include "smrt/marginal.hpp"
#include "smrt/quadratic.hpp"

namespace smrt {

enum class PerturbLaw { Exponential, Ones };

struct PerturbOptions {
  PerturbLaw law = PerturbLaw::Exponential;
  int threads = 1;
  double maxFailFraction = 0.10;
};

struct PerturbDraws {
  int B = 0;
  int n = 0;
  std::vector<CoefMatrix> betaTildeStar;  // B draws, p x M
  std::vector<CoefMatrix> betaHatStar;    // B draws, p x M
  MatrixXd sigmaHat;                      // p x M entrywise sample SD of betaHatStar
  std::uint64_t seed = 0;
  std::string gDist;                      // "exponential" | "ones"
  std::vector<int> failedDraws;
};

// One-step perturbed initial estimate, per outcome:
// betaTildeStar_m = betaTilde_m + profileInfo_m^{-1} * scores_m' * (g - 1).
// Entries where betaTilde is exactly zero stay zero (the exclusion carries
// through every draw).
CoefMatrix draw_perturbed_initial(const std::vector<MarginalFit>& fits,
                                  const VectorXd& g);

// B perturbation draws at the lambda already selected on the original data:
// each draw rebuilds the responses and the adaptive weights from
// betaTildeStar and re-solves the hierarchical lasso. Draw b depends only on
// (seed, b), so results are identical for any thread count.
PerturbDraws perturb_fit(const QuadraticSystem& sys,
                         const std::vector<MarginalFit>& fits, int B,
                         std::uint64_t seed, double lambda,
                         const PerturbOptions& opts = {});

struct CiMatrix {
  MatrixXd lo, hi;  // p x M
};

enum class CiMethod { Normal, Quantile };

CiMatrix confidence_intervals(const PerturbDraws& draws, const CoefMatrix& betaHat,
                              double level, CiMethod method);

// Quantile by linear interpolation between order statistics at rank
// n*q + 1/2 (the convention whose 5th/95th percentiles of {1..100} at level
// 0.9 are 5.5 and 95.5); v is consumed.
double quantile_interp(std::vector<double> v, double q);

// Inverse standard normal CDF (rational approximation polished by one
// Newton step on erfc).
double normal_quantile(double prob);

// JSON-lines persistence: one meta line, then one line per draw.
void write_draws_jsonl(const PerturbDraws& draws, std::ostream& os);
PerturbDraws read_draws_jsonl(std::istream& is);

}  // namespace smrt
