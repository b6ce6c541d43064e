#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "smrt/marginal.hpp"
#include "smrt/rng.hpp"

using namespace smrt;

namespace {

double expit(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Direct cumulative-logit log-likelihood, independent of the fit code:
// P(level <= l | x) = expit(t_{l+1} - x'beta).
double loglik_direct(const MatrixXd& X, const VectorXi& lev, const VectorXd& beta,
                     const VectorXd& t) {
  const int L = static_cast<int>(t.size()) + 1;
  double ll = 0.0;
  for (int i = 0; i < X.rows(); ++i) {
    const double eta = X.row(i).dot(beta);
    const int l = lev[i];
    const double up = l + 1 <= L - 1 ? expit(t[l] - eta) : 1.0;
    const double lo = l >= 1 ? expit(t[l - 1] - eta) : 0.0;
    ll += std::log(up - lo);
  }
  return ll;
}

OutcomeColumn make_col(const VectorXi& v, int levels) {
  OutcomeColumn c;
  c.kind = levels == 2 ? OutcomeKind::Binary : OutcomeKind::Ordinal;
  c.levels = levels;
  c.values = v;
  return c;
}

// Small random ordinal instance with a real signal.
struct Instance {
  MatrixXd X;
  OutcomeColumn col;
};

Instance random_instance(int n, int p, int L, std::uint64_t seed) {
  RngStream r = RngStream::derive(seed, {17});
  Instance in;
  in.X.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) in.X(i, j) = std::floor(r.uniform01() * 3);
  VectorXd beta = VectorXd::Zero(p);
  for (int j = 0; j < p; ++j) beta[j] = (j % 2 == 0) ? 0.8 : -0.4;
  VectorXi lev(n);
  // Latent logistic outcome thresholded into L near-equal groups by rank.
  std::vector<std::pair<double, int>> latent(n);
  for (int i = 0; i < n; ++i) {
    double u = r.uniform01();
    latent[i] = {in.X.row(i).dot(beta) + std::log(u / (1 - u)), i};
  }
  std::sort(latent.begin(), latent.end());
  for (int rnk = 0; rnk < n; ++rnk)
    lev[latent[rnk].second] = static_cast<int>((static_cast<long long>(rnk) * L) / n);
  in.col = make_col(lev, L);
  return in;
}

}  // namespace

TEST_CASE("balanced binary outcome gives betaTilde = 0 exactly") {
  // Outcome distribution identical within every level of x: score at beta=0
  // vanishes by symmetry, so the fit stays at zero without taking a step.
  MatrixXd X(8, 1);
  X << 0, 0, 0, 0, 1, 1, 1, 1;
  VectorXi y(8);
  y << 0, 0, 1, 1, 0, 0, 1, 1;
  MarginalFit f = fit_cumulative_logit(X, make_col(y, 2));
  CHECK(f.betaTilde[0] == 0.0);
  CHECK(f.converged);
}

TEST_CASE("n=30 p=1 L=3 fit matches a dense grid-search maximizer to 1e-4") {
  Instance in = random_instance(30, 1, 3, 99);
  MarginalFit f = fit_cumulative_logit(in.X, in.col);

  // Coarse-to-fine grid search over (beta, t1, t2), refit-independent.
  double bBest = 0, t1Best = 0, t2Best = 1, best = -1e300;
  double bC = 0, t1C = 0, t2C = 0.5, span = 4.0;
  for (int round = 0; round < 8; ++round) {
    const int G = 21;
    double bb = bBest, tt1 = t1Best, tt2 = t2Best;
    for (int a = 0; a < G; ++a)
      for (int b = 0; b < G; ++b)
        for (int c = 0; c < G; ++c) {
          double bv = bC + span * (2.0 * a / (G - 1) - 1.0);
          double t1 = t1C + span * (2.0 * b / (G - 1) - 1.0);
          double t2 = t2C + span * (2.0 * c / (G - 1) - 1.0);
          if (t2 <= t1 + 1e-6) continue;
          VectorXd beta(1), t(2);
          beta << bv;
          t << t1, t2;
          double ll = loglik_direct(in.X, in.col.values, beta, t);
          if (ll > best) {
            best = ll;
            bb = bv;
            tt1 = t1;
            tt2 = t2;
          }
        }
    bBest = bb;
    t1Best = tt1;
    t2Best = tt2;
    bC = bb;
    t1C = tt1;
    t2C = tt2;
    span *= 0.2;
  }
  CHECK(std::abs(f.betaTilde[0] - bBest) < 1e-4);
  CHECK(std::abs(f.thresholds[0] - t1Best) < 1e-4);
  CHECK(std::abs(f.thresholds[1] - t2Best) < 1e-4);
  CHECK(f.logLik == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("analytic gradient matches central finite differences to 1e-6") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    Instance in = random_instance(60, 3, 4, seed);
    MarginalFit fitted = fit_cumulative_logit(in.X, in.col);
    RngStream r = RngStream::derive(seed, {5});
    for (int pt = 0; pt < 5; ++pt) {
      VectorXd beta(3);
      for (int j = 0; j < 3; ++j) beta[j] = r.normal() * 0.5;
      VectorXd t = fitted.thresholds;
      for (int l = 0; l < t.size(); ++l) t[l] += 0.2 * r.normal();
      std::sort(t.data(), t.data() + t.size());
      for (int l = 1; l < t.size(); ++l) t[l] = std::max(t[l], t[l - 1] + 0.05);

      LoglikDerivs an = marginal_loglik(in.X, in.col, beta, t);
      CHECK(an.logLik == doctest::Approx(loglik_direct(in.X, in.col.values, beta, t))
                             .epsilon(1e-12));
      const double h = 1e-5;
      for (int j = 0; j < 3; ++j) {
        VectorXd bp = beta, bm = beta;
        bp[j] += h;
        bm[j] -= h;
        const double fd = (loglik_direct(in.X, in.col.values, bp, t) -
                           loglik_direct(in.X, in.col.values, bm, t)) /
                          (2 * h);
        CHECK(std::abs(an.gradBeta[j] - fd) / (std::abs(fd) + 1.0) < 1e-6);
      }
      for (int l = 0; l < t.size(); ++l) {
        VectorXd tp = t, tm = t;
        tp[l] += h;
        tm[l] -= h;
        const double fd = (loglik_direct(in.X, in.col.values, beta, tp) -
                           loglik_direct(in.X, in.col.values, beta, tm)) /
                          (2 * h);
        CHECK(std::abs(an.gradThresholds[l] - fd) / (std::abs(fd) + 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("log-likelihood is non-decreasing across Newton iterations") {
  Instance in = random_instance(80, 2, 5, 21);
  MarginalFit f = fit_cumulative_logit(in.X, in.col);
  REQUIRE(f.llTrace.size() >= 2);
  for (std::size_t i = 1; i < f.llTrace.size(); ++i)
    CHECK(f.llTrace[i] >= f.llTrace[i - 1] - 1e-12);
}

TEST_CASE("stationarity: profiled score columns sum to ~0; sigmaTilde positive") {
  Instance in = random_instance(70, 2, 4, 31);
  MarginalFit f = fit_cumulative_logit(in.X, in.col);
  VectorXd colSums = f.scores.colwise().sum();
  CHECK(colSums.cwiseAbs().maxCoeff() < 1e-6 * in.X.rows());
  CHECK((f.sigmaTilde.array() > 0).all());
  CHECK(f.sigmaTilde.allFinite());
  for (int l = 1; l < f.thresholds.size(); ++l)
    CHECK(f.thresholds[l] > f.thresholds[l - 1]);
  // profileInfo symmetric positive definite.
  CHECK((f.profileInfo - f.profileInfo.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(f.profileInfo);
  CHECK(es.eigenvalues().minCoeff() > 0);
}

TEST_CASE("profileInfo matches the FD negative Hessian of the profile log-likelihood") {
  Instance in = random_instance(60, 2, 3, 41);
  MarginalFit f = fit_cumulative_logit(in.X, in.col);
  const double h = 1e-4;
  MatrixXd fdH(2, 2);
  auto pll = [&](double b0, double b1) {
    VectorXd beta(2);
    beta << b0, b1;
    return profile_loglik(in.X, in.col, beta);
  };
  const double b0 = f.betaTilde[0], b1 = f.betaTilde[1];
  fdH(0, 0) = (pll(b0 + h, b1) - 2 * pll(b0, b1) + pll(b0 - h, b1)) / (h * h);
  fdH(1, 1) = (pll(b0, b1 + h) - 2 * pll(b0, b1) + pll(b0, b1 - h)) / (h * h);
  fdH(0, 1) = (pll(b0 + h, b1 + h) - pll(b0 + h, b1 - h) - pll(b0 - h, b1 + h) +
               pll(b0 - h, b1 - h)) /
              (4 * h * h);
  fdH(1, 0) = fdH(0, 1);
  MatrixXd rel = (f.profileInfo + fdH).cwiseAbs();
  CHECK(rel.maxCoeff() / f.profileInfo.norm() < 1e-4);
}

TEST_CASE("separable design raises a numerical error") {
  // Perfect separation: x fully determines the binary outcome.
  MatrixXd X(12, 1);
  VectorXi y(12);
  for (int i = 0; i < 12; ++i) {
    X(i, 0) = i < 6 ? 0.0 : 1.0;
    y[i] = i < 6 ? 0 : 1;
  }
  CHECK_THROWS_AS(fit_cumulative_logit(X, make_col(y, 2)), NumericError);
}

TEST_CASE("half_matrix: identity, diagonal, reconstruction, PSD guard") {
  CHECK((half_matrix(MatrixXd::Identity(3, 3)) - MatrixXd::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-14);

  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 4;
  d(1, 1) = 9;
  MatrixXd hd = half_matrix(d);
  CHECK(hd(0, 0) == doctest::Approx(2.0));
  CHECK(hd(1, 1) == doctest::Approx(3.0));
  CHECK(std::abs(hd(0, 1)) < 1e-14);

  RngStream r = RngStream::derive(4, {4});
  MatrixXd A(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) A(i, j) = r.normal();
  MatrixXd spd = A * A.transpose() + 0.5 * MatrixXd::Identity(6, 6);
  MatrixXd h = half_matrix(spd);
  CHECK((h.transpose() * h - spd).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  MatrixXd neg = MatrixXd::Identity(2, 2);
  neg(1, 1) = -0.5;
  CHECK_THROWS_AS(half_matrix(neg), NumericError);
}
