#include "smrt/marginal.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

namespace smrt {

namespace {

constexpr double kGradTol = 1e-8;
constexpr int kMaxIter = 100;
constexpr int kMaxHalvings = 20;
constexpr double kRidge = 1e-8;

double expit(double z) {
  if (z >= 0) {
    double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

// Thresholds are parameterized as t_1 = w_0, t_v = t_{v-1} + exp(w_v) so the
// Newton iteration is unconstrained while t stays strictly increasing.
VectorXd thresholds_from_working(const VectorXd& w) {
  VectorXd t(w.size());
  if (w.size() == 0) return t;
  t[0] = w[0];
  for (int v = 1; v < w.size(); ++v) t[v] = t[v - 1] + std::exp(w[v]);
  return t;
}

struct Derivs {
  double logLik = 0.0;
  VectorXd gradBeta;   // p
  VectorXd gradT;      // K (natural thresholds)
  MatrixXd hBB;        // p x p
  MatrixXd hBT;        // p x K
  MatrixXd hTT;        // K x K
  // Per-subject natural-parameter scores, filled only when requested.
  MatrixXd scoreBeta;  // n x p
  MatrixXd scoreT;     // n x K
};

// Log-likelihood, gradient and Hessian in the natural (beta, t)
// parameterization. Subject with level l contributes log(A_{l+1} - A_l)
// where A_u = expit(t_u - x'beta), A_0 = 0, A_L = 1.
Derivs evaluate(const MatrixXd& X, const VectorXi& lev, int L,
                const VectorXd& beta, const VectorXd& t, bool wantHessian,
                bool wantScores) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const int K = L - 1;
  Derivs d;
  d.gradBeta = VectorXd::Zero(p);
  d.gradT = VectorXd::Zero(K);
  if (wantHessian) {
    d.hBB = MatrixXd::Zero(p, p);
    d.hBT = MatrixXd::Zero(p, K);
    d.hTT = MatrixXd::Zero(K, K);
  }
  if (wantScores) {
    d.scoreBeta = MatrixXd::Zero(n, p);
    d.scoreT = MatrixXd::Zero(n, K);
  }

  const double tiny = std::numeric_limits<double>::min();
  for (int i = 0; i < n; ++i) {
    const int l = lev[i];
    const double eta = X.row(i).dot(beta);
    // Upper boundary u = l + 1, lower boundary l; indexes into t are 1-based.
    double Au = 1.0, fu = 0.0, gu = 0.0;
    if (l + 1 <= K) {
      Au = expit(t[l] - eta);  // t[l] holds t_{l+1}
      fu = Au * (1.0 - Au);
      gu = fu * (1.0 - 2.0 * Au);
    }
    double Al = 0.0, fl = 0.0, gl = 0.0;
    if (l >= 1) {
      Al = expit(t[l - 1] - eta);
      fl = Al * (1.0 - Al);
      gl = fl * (1.0 - 2.0 * Al);
    }
    double prob = Au - Al;
    if (prob < tiny) prob = tiny;
    d.logLik += std::log(prob);

    const double sEta = (fl - fu) / prob;  // d logp / d eta, eta = x'beta
    d.gradBeta.noalias() += sEta * X.row(i).transpose();
    double stU = 0.0, stL = 0.0;
    if (l + 1 <= K) {
      stU = fu / prob;
      d.gradT[l] += stU;
    }
    if (l >= 1) {
      stL = -fl / prob;
      d.gradT[l - 1] += stL;
    }
    if (wantScores) {
      d.scoreBeta.row(i) = sEta * X.row(i);
      if (l + 1 <= K) d.scoreT(i, l) = stU;
      if (l >= 1) d.scoreT(i, l - 1) = stL;
    }

    if (wantHessian) {
      const double hEE = (gu - gl) / prob - sEta * sEta;
      d.hBB.noalias() += hEE * (X.row(i).transpose() * X.row(i));
      if (l + 1 <= K) {
        const double hEU = -gu / prob - sEta * fu / prob;
        d.hBT.col(l).noalias() += hEU * X.row(i).transpose();
        d.hTT(l, l) += gu / prob - (fu * fu) / (prob * prob);
      }
      if (l >= 1) {
        const double hEL = gl / prob + sEta * fl / prob;
        d.hBT.col(l - 1).noalias() += hEL * X.row(i).transpose();
        d.hTT(l - 1, l - 1) += -gl / prob - (fl * fl) / (prob * prob);
      }
      if (l + 1 <= K && l >= 1) {
        const double hUL = (fu * fl) / (prob * prob);
        d.hTT(l, l - 1) += hUL;
        d.hTT(l - 1, l) += hUL;
      }
    }
  }
  return d;
}

// Jacobian of t with respect to the working parameters w.
MatrixXd threshold_jacobian(const VectorXd& w) {
  const int K = static_cast<int>(w.size());
  MatrixXd J = MatrixXd::Zero(K, K);
  for (int v = 0; v < K; ++v) {
    J(v, 0) = 1.0;
    for (int u = 1; u <= v; ++u) J(v, u) = std::exp(w[u]);
  }
  return J;
}

// Starting thresholds: the intercept-only MLE, i.e. empirical cumulative
// logits. Exact stationarity here makes symmetric-data fits return
// beta = 0 without taking a step.
VectorXd initial_working(const VectorXi& lev, int L, int n) {
  std::vector<int> counts(L, 0);
  for (int i = 0; i < n; ++i) ++counts[lev[i]];
  VectorXd t(L - 1);
  double cum = 0.0;
  for (int l = 0; l < L - 1; ++l) {
    cum += counts[l];
    double frac = cum / n;
    t[l] = std::log(frac / (1.0 - frac));
  }
  VectorXd w(L - 1);
  w[0] = t[0];
  for (int v = 1; v < L - 1; ++v) w[v] = std::log(t[v] - t[v - 1]);
  return w;
}

struct NewtonResult {
  VectorXd beta;
  VectorXd w;
  double logLik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ridged = false;
  std::vector<double> llTrace;
};

// Newton-Raphson with step-halving over (beta, w); fixedBeta freezes the
// beta block (used for profiling the likelihood at a given beta).
NewtonResult newton_fit(const MatrixXd& X, const VectorXi& lev, int L,
                        VectorXd beta, VectorXd w, bool fixedBeta) {
  const int p = static_cast<int>(X.cols());
  const int K = L - 1;
  const int dim = (fixedBeta ? 0 : p) + K;

  NewtonResult res;
  VectorXd t = thresholds_from_working(w);
  Derivs d = evaluate(X, lev, L, beta, t, true, false);
  res.llTrace.push_back(d.logLik);

  for (int iter = 0; iter < kMaxIter; ++iter) {
    // Gradient and Hessian in working coordinates.
    MatrixXd J = threshold_jacobian(w);
    VectorXd gW = J.transpose() * d.gradT;
    MatrixXd hWW = J.transpose() * d.hTT * J;
    // Curvature of the reparameterization: d2 t_v / d w_u^2 = exp(w_u), u>=1.
    for (int u = 1; u < K; ++u) {
      double acc = 0.0;
      for (int v = u; v < K; ++v) acc += d.gradT[v];
      hWW(u, u) += acc * std::exp(w[u]);
    }

    VectorXd grad(dim);
    MatrixXd hess(dim, dim);
    if (fixedBeta) {
      grad = gW;
      hess = hWW;
    } else {
      grad.head(p) = d.gradBeta;
      grad.tail(K) = gW;
      hess.topLeftCorner(p, p) = d.hBB;
      hess.topRightCorner(p, K) = d.hBT * J;
      hess.bottomLeftCorner(K, p) = hess.topRightCorner(p, K).transpose();
      hess.bottomRightCorner(K, K) = hWW;
    }

    if (grad.cwiseAbs().maxCoeff() < kGradTol) {
      res.converged = true;
      break;
    }
#ifdef SMRT_NEWTON_TRACE
    fprintf(stderr, "iter %d ll %.12f |g| %.3e\n", iter, d.logLik,
            grad.cwiseAbs().maxCoeff());
#endif

    MatrixXd info = -hess;  // observed information in working coordinates
    Eigen::LLT<MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
      res.ridged = true;
      info.diagonal().array() += kRidge * std::max(1.0, info.diagonal().maxCoeff());
      llt.compute(info);
      if (llt.info() != Eigen::Success)
        throw NumericError("separable design: information matrix singular");
    }
    VectorXd step = llt.solve(grad);

    // The quadratic model predicts a gain of grad'step / 2; once that falls
    // below double resolution on this likelihood's scale, the gradient
    // tolerance is unreachable and the iterate is the optimum.
    if (0.5 * grad.dot(step) < 1e-13 * (std::abs(d.logLik) + 1.0)) {
      res.converged = true;
      break;
    }

    double scale = 1.0;
    bool improved = false;
    VectorXd betaNew = beta, wNew = w;
    Derivs dNew;
    for (int h = 0; h <= kMaxHalvings; ++h) {
      if (fixedBeta) {
        wNew = w + scale * step;
      } else {
        betaNew = beta + scale * step.head(p);
        wNew = w + scale * step.tail(K);
      }
      VectorXd tNew = thresholds_from_working(wNew);
      dNew = evaluate(X, lev, L, betaNew, tNew, true, false);
      if (std::isfinite(dNew.logLik) && dNew.logLik >= d.logLik) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    ++res.iterations;
    if (!improved) break;  // no ascent direction left; gradient check decides
    beta = betaNew;
    w = wNew;
    d = dNew;
    res.llTrace.push_back(d.logLik);
  }

  if (!res.converged) {
    // Final gradient check (the loop may exhaust iterations right at the optimum).
    VectorXd tFin = thresholds_from_working(w);
    Derivs dFin = evaluate(X, lev, L, beta, tFin, false, false);
    MatrixXd J = threshold_jacobian(w);
    VectorXd gW = J.transpose() * dFin.gradT;
    double gmax = gW.cwiseAbs().maxCoeff();
    if (!fixedBeta && p > 0)
      gmax = std::max(gmax, dFin.gradBeta.cwiseAbs().maxCoeff());
    res.converged = gmax < kGradTol;
  }

  res.beta = beta;
  res.w = w;
  res.logLik = d.logLik;
  return res;
}

}  // namespace

MarginalFit fit_cumulative_logit(const MatrixXd& X, const OutcomeColumn& col) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const int L = col.levels;
  if (col.values.size() != n) throw ValidationError("outcome length mismatch");

  VectorXd w0 = initial_working(col.values, L, n);
  NewtonResult nr = newton_fit(X, col.values, L, VectorXd::Zero(p), w0, false);
  if (!nr.converged)
    throw NumericError("marginal fit did not converge after " +
                       std::to_string(nr.iterations) + " iterations");

  VectorXd t = thresholds_from_working(nr.w);
  Derivs d = evaluate(X, col.values, L, nr.beta, t, true, true);

  // Profile out the thresholds: Schur complement of the natural-parameter
  // observed information, and matching per-subject profiled scores.
  MatrixXd iBB = -d.hBB;
  MatrixXd iBT = -d.hBT;
  MatrixXd iTT = -d.hTT;
  Eigen::LDLT<MatrixXd> ldlt(iTT);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericError("separable design: threshold information not positive definite");
  MatrixXd W = ldlt.solve(iBT.transpose());  // K x p
  MatrixXd profileInfo = iBB - iBT * W;
  profileInfo = 0.5 * (profileInfo + profileInfo.transpose());

  // Separation leaves the likelihood flat in some beta direction; the Newton
  // noise-floor stop can then report convergence at a huge beta with a
  // near-singular profile information. Catch it by conditioning.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(profileInfo);
  if (es.info() != Eigen::Success ||
      es.eigenvalues().minCoeff() <=
          1e-8 * std::max(static_cast<double>(n), es.eigenvalues().maxCoeff()))
    throw NumericError("separable design: profile information not positive definite");

  Eigen::LLT<MatrixXd> llt(profileInfo);
  if (llt.info() != Eigen::Success)
    throw NumericError("separable design: profile information not positive definite");
  MatrixXd profInv = llt.solve(MatrixXd::Identity(p, p));

  MarginalFit fit;
  fit.betaTilde = nr.beta;
  fit.thresholds = t;
  fit.profileInfo = profileInfo;
  fit.scores = d.scoreBeta - d.scoreT * W;
  fit.sigmaTilde = (static_cast<double>(n) * profInv.diagonal()).cwiseSqrt();
  fit.logLik = nr.logLik;
  fit.iterations = nr.iterations;
  fit.converged = nr.converged;
  fit.ridged = nr.ridged;
  fit.llTrace = std::move(nr.llTrace);
  return fit;
}

MarginalFit fit_marginal(const Dataset& ds, int m) {
  if (m < 0 || m >= ds.M()) throw ValidationError("outcome index out of range");
  MarginalFit fit = fit_cumulative_logit(ds.X, ds.outcomes[m]);
  fit.m = m;
  return fit;
}

double profile_loglik(const MatrixXd& X, const OutcomeColumn& col,
                      const VectorXd& beta) {
  const int n = static_cast<int>(X.rows());
  VectorXd w0 = initial_working(col.values, col.levels, n);
  NewtonResult nr = newton_fit(X, col.values, col.levels, beta, w0, true);
  if (!nr.converged)
    throw NumericError("threshold profiling did not converge");
  return nr.logLik;
}

double profile_loglik(const Dataset& ds, int m, const VectorXd& beta) {
  return profile_loglik(ds.X, ds.outcomes[m], beta);
}

LoglikDerivs marginal_loglik(const MatrixXd& X, const OutcomeColumn& col,
                             const VectorXd& beta, const VectorXd& thresholds) {
  if (thresholds.size() != col.levels - 1)
    throw ValidationError("threshold count must be L - 1");
  for (int l = 1; l < thresholds.size(); ++l)
    if (!(thresholds[l] > thresholds[l - 1]))
      throw ValidationError("thresholds must be strictly increasing");
  Derivs d = evaluate(X, col.values, col.levels, beta, thresholds, false, false);
  LoglikDerivs out;
  out.logLik = d.logLik;
  out.gradBeta = std::move(d.gradBeta);
  out.gradThresholds = std::move(d.gradT);
  return out;
}

MatrixXd half_matrix(const MatrixXd& info) {
  if (info.rows() != info.cols()) throw ValidationError("half_matrix needs a square matrix");
  MatrixXd sym = 0.5 * (info + info.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  VectorXd ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);
  VectorXd root(ev.size());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-10 * scale)
      throw NumericError("half_matrix: input not positive semidefinite");
    root[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  MatrixXd half = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (half + half.transpose());
}

MatrixXd sigma_tilde_matrix(const std::vector<MarginalFit>& fits) {
  if (fits.empty()) throw ValidationError("no marginal fits");
  const int p = static_cast<int>(fits[0].sigmaTilde.size());
  MatrixXd out(p, static_cast<int>(fits.size()));
  for (std::size_t m = 0; m < fits.size(); ++m) {
    if (fits[m].sigmaTilde.size() != p) throw ValidationError("marginal fits disagree on p");
    out.col(static_cast<int>(m)) = fits[m].sigmaTilde;
  }
  return out;
}

}  // namespace smrt
