#include <doctest.h>

#include <cmath>

#include "smrt/simulate.hpp"

using namespace smrt;

TEST_CASE("genotype frequencies match the three-point law") {
  SimConfig cfg;
  cfg.n = 100;
  cfg.p = 1;
  cfg.M = 1;
  cfg.beta0 = CoefMatrix::Zero(1, 1);
  RngStream r = RngStream::derive(123, {9});
  long c0 = 0, c1 = 0, c2 = 0;
  const long N = 1000000;
  // Count over many generated datasets' X entries.
  const int perDs = 100;
  SimConfig big = cfg;
  big.n = perDs;
  for (long i = 0; i < N / perDs; ++i) {
    Dataset ds = generate(big, r);
    for (int k = 0; k < perDs; ++k) {
      if (ds.X(k, 0) == 0.0) ++c0;
      else if (ds.X(k, 0) == 1.0) ++c1;
      else ++c2;
    }
  }
  CHECK(std::abs(static_cast<double>(c0) / N - 0.0225) < 0.002);
  CHECK(std::abs(static_cast<double>(c1) / N - 0.2550) < 0.002);
  CHECK(std::abs(static_cast<double>(c2) / N - 0.7225) < 0.002);
}

TEST_CASE("null beta0 leaves predictors and outcome levels uncorrelated") {
  SimConfig cfg;
  cfg.n = 4000;
  cfg.p = 2;
  cfg.M = 2;
  cfg.beta0 = CoefMatrix::Zero(2, 2);
  RngStream r = RngStream::derive(7, {2});
  Dataset ds = generate(cfg, r);
  for (int j = 0; j < 2; ++j) {
    for (int m = 0; m < 2; ++m) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < cfg.n; ++i) {
        const double x = ds.X(i, j), y = ds.outcomes[m].values[i];
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
      }
      const double n = cfg.n;
      const double corr = (sxy - sx * sy / n) /
                          std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
      CHECK(std::abs(corr) < 3.0 / std::sqrt(n));
    }
  }
}

TEST_CASE("default beta0 is the 30 x 4 block design") {
  CoefMatrix b = paper_beta0();
  REQUIRE(b.rows() == 30);
  REQUIRE(b.cols() == 4);
  const int active[4] = {20, 16, 12, 8};
  const double value[4] = {1.0, 0.5, 1.0, 0.5};
  for (int m = 0; m < 4; ++m) {
    for (int j = 0; j < 30; ++j) {
      if (j < active[m])
        CHECK(b(j, m) == value[m]);
      else
        CHECK(b(j, m) == 0.0);
    }
  }
  // Eight predictors relate to all four outcomes; ten are fully null.
  int allFour = 0, null = 0;
  for (int j = 0; j < 30; ++j) {
    int assoc = 0;
    for (int m = 0; m < 4; ++m) assoc += b(j, m) != 0.0;
    if (assoc == 4) ++allFour;
    if (assoc == 0) ++null;
  }
  CHECK(allFour == 8);
  CHECK(null == 10);
}

TEST_CASE("orientation recovery: fitted betaTilde estimates +beta0") {
  SimConfig cfg;
  cfg.n = 4000;
  cfg.p = 1;
  cfg.M = 1;
  cfg.levels = 10;
  cfg.beta0 = CoefMatrix::Constant(1, 1, 1.0);
  RngStream r = RngStream::derive(99, {4});
  Dataset ds = generate(cfg, r);
  MarginalFit f = fit_marginal(ds, 0);
  // The discretized proportional-odds fit recovers the generator's +1 within
  // sampling error and mild discretization attenuation.
  CHECK(f.betaTilde[0] > 0.8);
  CHECK(f.betaTilde[0] < 1.2);
}

TEST_CASE("latent outcome correlation follows the exchangeable design") {
  SimConfig cfg;
  cfg.n = 20000;
  cfg.p = 1;
  cfg.M = 2;
  cfg.rho = 0.15;
  cfg.beta0 = CoefMatrix::Zero(1, 2);
  RngStream r = RngStream::derive(31, {6});
  Dataset ds = generate(cfg, r);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < cfg.n; ++i) {
    const double a = ds.outcomes[0].values[i], b = ds.outcomes[1].values[i];
    sx += a;
    sy += b;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  const double n = cfg.n;
  const double corr =
      (sxy - sx * sy / n) / std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
  // Level indices are monotone transforms; rank correlation of the latent
  // normals with rho = 0.15 lands near 0.14; require the right ballpark.
  CHECK(corr > 0.08);
  CHECK(corr < 0.22);
}

TEST_CASE("run_experiment guards and determinism across thread counts") {
  SimConfig cfg;
  cfg.n = 100;
  cfg.p = 3;
  cfg.M = 2;
  cfg.levels = 4;
  cfg.reps = 0;
  cfg.beta0 = CoefMatrix::Zero(3, 2);
  CHECK_THROWS_AS(run_experiment(cfg), ValidationError);

  cfg.reps = 4;
  cfg.B = 10;
  cfg.doPermutationTests = true;
  cfg.doResampleCis = true;
  cfg.ciB = 20;
  cfg.beta0(0, 0) = 1.0;
  cfg.seed = 5;
  cfg.threads = 1;
  ExperimentMetrics a = run_experiment(cfg);
  cfg.threads = 3;
  ExperimentMetrics b = run_experiment(cfg);
  CHECK(a.sparsity.nullZeroFrac == b.sparsity.nullZeroFrac);
  CHECK(a.sparsity.meanLambda == b.sparsity.meanLambda);
  REQUIRE(a.methods.size() == b.methods.size());
  for (std::size_t i = 0; i < a.methods.size(); ++i) {
    CHECK(a.methods[i].fwer == b.methods[i].fwer);
    CHECK(a.methods[i].avgPower == b.methods[i].avgPower);
  }
  REQUIRE(a.groups.size() == b.groups.size());
  for (std::size_t i = 0; i < a.groups.size(); ++i) {
    CHECK(a.groups[i].biasHat == b.groups[i].biasHat);
    CHECK(a.groups[i].coverQuantile == b.groups[i].coverQuantile);
  }
}

TEST_CASE("fwer and power aggregation helpers") {
  CoefMatrix beta0 = CoefMatrix::Zero(3, 2);
  beta0(0, 0) = 1.0;
  beta0(0, 1) = 0.5;  // predictor 0 has no nulls
  beta0(1, 0) = 1.0;  // predictor 1 has one null (m=1)

  // Rigged always-reject: every hypothesis rejected for every predictor.
  std::vector<std::vector<int>> rejectAll = {{0, 1}, {0, 1}, {0, 1}};
  CHECK(fwer_fraction(rejectAll, beta0) == 1.0);  // both eligible predictors err
  CHECK(power_fraction(rejectAll, beta0) == 1.0);

  std::vector<std::vector<int>> none = {{}, {}, {}};
  CHECK(fwer_fraction(none, beta0) == 0.0);
  CHECK(power_fraction(none, beta0) == 0.0);

  // Correct rejections only: no false rejection counted.
  std::vector<std::vector<int>> exact = {{0, 1}, {0}, {}};
  CHECK(fwer_fraction(exact, beta0) == 0.0);
  CHECK(power_fraction(exact, beta0) == 1.0);
}

TEST_CASE("config validation catches bad shapes and sizes") {
  SimConfig cfg;
  cfg.p = 5;
  cfg.M = 2;
  cfg.reps = 1;
  cfg.beta0 = CoefMatrix::Zero(4, 2);  // wrong rows
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.beta0 = CoefMatrix::Zero(5, 2);
  cfg.kList = {3};  // k > M
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.kList = {1};
  cfg.maf = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
