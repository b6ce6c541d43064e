#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "smrt/quadratic.hpp"
#include "smrt/rng.hpp"

using namespace smrt;

namespace {

MatrixXd random_spd(int p, std::uint64_t seed, double ridge = 0.5) {
  RngStream r = RngStream::derive(seed, {0x5044});
  MatrixXd A(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) A(i, j) = r.normal();
  return A * A.transpose() + ridge * MatrixXd::Identity(p, p);
}

// Minimal hand-built marginal fits: only the fields assemble() consumes.
MarginalFit stub_fit(const MatrixXd& info, const VectorXd& betaTilde, int n) {
  MarginalFit f;
  f.betaTilde = betaTilde;
  f.profileInfo = info;
  f.scores = MatrixXd::Zero(n, betaTilde.size());
  f.sigmaTilde = (static_cast<double>(n) *
                  info.llt().solve(MatrixXd::Identity(info.rows(), info.cols()))
                      .diagonal())
                     .cwiseSqrt();
  f.thresholds = VectorXd::LinSpaced(3, -1.0, 1.0);
  f.converged = true;
  return f;
}

}  // namespace

TEST_CASE("M=1 with identity information: response equals betaTilde") {
  VectorXd bt(3);
  bt << 1.0, -2.0, 0.5;
  QuadraticSystem sys = assemble({stub_fit(MatrixXd::Identity(3, 3), bt, 50)});
  CHECK((sys.responses[0] - bt).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(sys.n == 50);
}

TEST_CASE("quad_loss is zero at betaTilde and positive elsewhere") {
  VectorXd b1(2), b2(2);
  b1 << 0.3, -1.1;
  b2 << 2.0, 0.0;
  QuadraticSystem sys = assemble(
      {stub_fit(random_spd(2, 1), b1, 40), stub_fit(random_spd(2, 2), b2, 40)});
  CHECK(quad_loss(sys, sys.betaTilde) == doctest::Approx(0.0).epsilon(1e-12));
  CoefMatrix off = sys.betaTilde;
  off(0, 0) += 0.1;
  CHECK(quad_loss(sys, off) > 0.0);
}

TEST_CASE("quad_loss equals the explicit quadratic form to 1e-8") {
  RngStream r = RngStream::derive(7, {2});
  VectorXd b1(4), b2(4);
  for (int j = 0; j < 4; ++j) {
    b1[j] = r.normal();
    b2[j] = r.normal();
  }
  std::vector<MarginalFit> fits = {stub_fit(random_spd(4, 3), b1, 60),
                                   stub_fit(random_spd(4, 4), b2, 60)};
  QuadraticSystem sys = assemble(fits);
  for (int rep = 0; rep < 10; ++rep) {
    CoefMatrix beta(4, 2);
    for (int j = 0; j < 4; ++j)
      for (int m = 0; m < 2; ++m) beta(j, m) = r.normal();
    double direct = 0;
    for (int m = 0; m < 2; ++m) {
      VectorXd diff = beta.col(m) - sys.betaTilde.col(m);
      direct += diff.dot(fits[m].profileInfo * diff);
    }
    CHECK(std::abs(quad_loss(sys, beta) - direct) < 1e-8 * (1.0 + direct));
  }
}

TEST_CASE("scaling the information scales the loss") {
  VectorXd bt(2);
  bt << 1.0, -0.5;
  MatrixXd info = random_spd(2, 9);
  QuadraticSystem a = assemble({stub_fit(info, bt, 30)});
  QuadraticSystem b = assemble({stub_fit(3.0 * info, bt, 30)});
  CoefMatrix beta = CoefMatrix::Zero(2, 1);
  CHECK(quad_loss(b, beta) == doctest::Approx(3.0 * quad_loss(a, beta)).epsilon(1e-10));
}

TEST_CASE("halves reproduce the information matrices") {
  std::vector<MarginalFit> fits = {
      stub_fit(random_spd(3, 11), VectorXd::Ones(3), 44),
      stub_fit(random_spd(3, 12), VectorXd::Zero(3), 44)};
  QuadraticSystem sys = assemble(fits);
  for (int m = 0; m < 2; ++m)
    CHECK((sys.halves[m].transpose() * sys.halves[m] - sys.infos[m])
              .cwiseAbs()
              .maxCoeff() < 1e-8);
}

TEST_CASE("withBlock swaps exactly one outcome block") {
  VectorXd b1 = VectorXd::Ones(2), b2 = VectorXd::Zero(2);
  QuadraticSystem sys = assemble(
      {stub_fit(random_spd(2, 13), b1, 25), stub_fit(random_spd(2, 14), b2, 25)});
  MatrixXd newInfo = random_spd(2, 15);
  VectorXd newBt(2);
  newBt << -3.0, 2.0;
  QuadraticSystem swapped = sys.withBlock(1, newInfo, newBt);
  CHECK((swapped.infos[0] - sys.infos[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((swapped.betaTilde.col(0) - sys.betaTilde.col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((swapped.betaTilde.col(1) - newBt).cwiseAbs().maxCoeff() == 0.0);
  CHECK((swapped.halves[1].transpose() * swapped.halves[1] - newInfo)
            .cwiseAbs()
            .maxCoeff() < 1e-8);
  CHECK((swapped.responses[1] - swapped.halves[1] * newBt).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("second-order agreement with the profile log-likelihood") {
  // quad_loss(beta)/2 ~ PLL(betaTilde) - PLL(beta) near betaTilde.
  RngStream r = RngStream::derive(77, {1});
  const int n = 120, p = 2, L = 4;
  MatrixXd X(n, p);
  VectorXi lev(n);
  std::vector<std::pair<double, int>> latent(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = std::floor(r.uniform01() * 3);
    X(i, 1) = std::floor(r.uniform01() * 2);
    double u = r.uniform01();
    latent[i] = {0.7 * X(i, 0) - 0.5 * X(i, 1) + std::log(u / (1 - u)), i};
  }
  std::sort(latent.begin(), latent.end());
  for (int rnk = 0; rnk < n; ++rnk)
    lev[latent[rnk].second] = static_cast<int>((static_cast<long long>(rnk) * L) / n);
  OutcomeColumn col;
  col.levels = L;
  col.values = lev;

  MarginalFit f = fit_cumulative_logit(X, col);
  f.m = 0;
  QuadraticSystem sys = assemble({f});
  const double pllAtTilde = profile_loglik(X, col, f.betaTilde);
  for (int rep = 0; rep < 5; ++rep) {
    VectorXd dir(p);
    dir << r.normal(), r.normal();
    dir *= 0.05 / dir.norm();
    CoefMatrix beta = f.betaTilde + dir;
    const double drop = pllAtTilde - profile_loglik(X, col, beta);
    const double quad = 0.5 * quad_loss(sys, beta);
    // Agreement to o(||dir||^2): third-order error at ||dir|| = 0.05 with
    // n = 120 is a few times 1e-3 relative to curvature.
    CHECK(std::abs(drop - quad) < 0.05 * std::max(quad, 1e-4));
  }
}
