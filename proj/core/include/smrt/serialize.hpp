#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "smrt/hier_lasso.hpp"
#include "smrt/marginal.hpp"
#include "smrt/resample.hpp"
#include "smrt/simulate.hpp"
#include "smrt/stepdown.hpp"

namespace smrt {

struct MarginalSummary {
  int m = 0;
  VectorXd thresholds;
  double logLik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ridged = false;
};

// Everything fit.json carries: the sparse fit plus the marginal summaries
// needed by the test and report commands.
struct FitArtifact {
  int n = 0, p = 0, M = 0;
  std::vector<std::string> predictorNames, outcomeNames;
  SparseFit fit;
  CoefMatrix betaTilde;
  MatrixXd sigmaTilde;  // p x M
  std::vector<MarginalSummary> marginals;
  std::uint64_t seed = 0;
};

FitArtifact make_fit_artifact(const Dataset& ds, const std::vector<MarginalFit>& fits,
                              const SparseFit& fit, std::uint64_t seed);

void write_fit_json(const FitArtifact& a, std::ostream& os);
FitArtifact read_fit_json(std::istream& is);

void write_test_json(const std::vector<TestResult>& results,
                     const std::vector<std::string>& predictorNames,
                     const std::vector<std::string>& outcomeNames, std::ostream& os);

// TSV report: one row per (predictor, outcome, method).
void write_test_tsv(const std::vector<TestResult>& results,
                    const std::vector<std::string>& predictorNames,
                    const std::vector<std::string>& outcomeNames, std::ostream& os);

// ci.tsv: asymptotic intervals always; normal/quantile columns NA without draws.
void write_ci_tsv(const FitArtifact& a, const CiMatrix* normal,
                  const CiMatrix* quantile, double level, std::ostream& os);

void write_metrics_json(const ExperimentMetrics& m, std::ostream& os);
void write_metrics_tsv(const ExperimentMetrics& m, std::ostream& os);

// Combined per-hypothesis report from fit + test artifacts (+ optional ci.tsv).
void write_report_tsv(const FitArtifact& a, const std::vector<TestResult>& results,
                      const std::string& ciTsvPath, std::ostream& os);

// Simulation config file (JSON) for the simulate command.
SimConfig read_sim_config(std::istream& is);

}  // namespace smrt
