#include "smrt/hier_lasso.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>

namespace smrt {

namespace {

constexpr double kCdTol = 1e-9;
constexpr int kCdMaxSweeps = 10000;
constexpr double kOuterTol = 1e-7;
constexpr int kOuterMaxIter = 200;
constexpr double kInf = std::numeric_limits<double>::infinity();

double soft_threshold(double z, double thr) {
  if (z > thr) return z - thr;
  if (z < -thr) return z + thr;
  return 0.0;
}

}  // namespace

PenaltySpec PenaltySpec::fromBetaTilde(const CoefMatrix& betaTilde, double lambda,
                                       bool nonneg) {
  if (lambda < 0) throw ValidationError("lambda must be nonnegative");
  PenaltySpec pen;
  pen.lambda = lambda;
  pen.nonneg = nonneg;
  pen.weights = betaTilde.unaryExpr(
      [](double b) { return b == 0.0 ? kInf : 1.0 / std::abs(b); });
  return pen;
}

WeightedLassoResult weighted_lasso(const MatrixXd& design, const VectorXd& response,
                                   const VectorXd& penWeights, double lam,
                                   const VectorXd* init, bool nonneg) {
  const int q = static_cast<int>(design.cols());
  if (response.size() != design.rows())
    throw ValidationError("weighted_lasso: response length mismatch");
  if (penWeights.size() != q)
    throw ValidationError("weighted_lasso: weight length mismatch");
  if (lam < 0) throw ValidationError("weighted_lasso: lambda must be nonnegative");
  if (!design.allFinite()) throw ValidationError("weighted_lasso: non-finite design");

  WeightedLassoResult res;
  if (lam == 0.0 && !nonneg) {
    // Unpenalized: minimum-norm least squares on the finite-weight columns.
    std::vector<int> keep;
    for (int k = 0; k < q; ++k)
      if (std::isfinite(penWeights[k])) keep.push_back(k);
    res.coef = VectorXd::Zero(q);
    if (!keep.empty()) {
      MatrixXd sub(design.rows(), static_cast<int>(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) sub.col(static_cast<int>(k)) = design.col(keep[k]);
      VectorXd sol = sub.completeOrthogonalDecomposition().solve(response);
      for (std::size_t k = 0; k < keep.size(); ++k) res.coef[keep[k]] = sol[static_cast<int>(k)];
    }
    res.converged = true;
    return res;
  }

  MatrixXd gram = design.transpose() * design;
  VectorXd xty = design.transpose() * response;

  VectorXd b = (init && init->size() == q) ? *init : VectorXd::Zero(q);
  for (int k = 0; k < q; ++k)
    if (!std::isfinite(penWeights[k]) || gram(k, k) <= 0.0) b[k] = 0.0;
  VectorXd gb = gram * b;

  for (int sweep = 0; sweep < kCdMaxSweeps; ++sweep) {
    double maxChange = 0.0;
    for (int k = 0; k < q; ++k) {
      const double gkk = gram(k, k);
      if (!std::isfinite(penWeights[k]) || gkk <= 0.0) continue;
      const double z = xty[k] - gb[k] + gkk * b[k];
      double bNew;
      if (nonneg)
        bNew = std::max(0.0, (z - lam * penWeights[k] * 0.5) / gkk);
      else
        bNew = soft_threshold(z, lam * penWeights[k] * 0.5) / gkk;
      const double delta = bNew - b[k];
      if (delta != 0.0) {
        b[k] = bNew;
        gb.noalias() += delta * gram.col(k);
        maxChange = std::max(maxChange, std::abs(delta));
      }
    }
    ++res.sweeps;
    if (maxChange < kCdTol) {
      res.converged = true;
      break;
    }
  }
  res.coef = std::move(b);
  return res;
}

namespace {

// Scales s_jm = 1 / w_jm used to absorb adaptive weights into the designs;
// excluded entries (infinite weight) get scale 0.
MatrixXd scales_from_weights(const MatrixXd& weights) {
  return weights.unaryExpr(
      [](double w) { return std::isfinite(w) ? 1.0 / w : 0.0; });
}

CoefMatrix reconstruct(const VectorXd& d, const MatrixXd& alpha, const MatrixXd& s) {
  return (s.array() * alpha.array()).matrix().array().colwise() * d.array();
}

double decomposition_objective(const QuadraticSystem& sys, const CoefMatrix& beta,
                               const VectorXd& d, const MatrixXd& alpha,
                               double lambda) {
  return quad_loss(sys, beta) + d.cwiseAbs().sum() + lambda * alpha.cwiseAbs().sum();
}

}  // namespace

SparseFit fit_hierarchical(const QuadraticSystem& sys, const PenaltySpec& pen,
                           const MatrixXd* alphaInit) {
  const int p = sys.p();
  const int M = sys.M();
  if (pen.weights.rows() != p || pen.weights.cols() != M)
    throw ValidationError("penalty weights have wrong shape");

  SparseFit fit;
  fit.lambda = pen.lambda;

  const MatrixXd s = scales_from_weights(pen.weights);

  if (pen.lambda == 0.0) {
    // Unpenalized minimum of the quadratic: betaHat = betaTilde exactly
    // (the infimum of sum d_j over decompositions is not attained, so the
    // alternation cannot reach it; return the limit directly).
    fit.betaHat = sys.betaTilde;
    fit.alpha = sys.betaTilde.unaryExpr(
        [](double b) { return b > 0.0 ? 1.0 : (b < 0.0 ? -1.0 : 0.0); });
    fit.d = VectorXd::Ones(p);
    fit.df = static_cast<int>((fit.betaHat.array() != 0.0).count());
    fit.converged = true;
    return fit;
  }

  VectorXd d = VectorXd::Ones(p);
  MatrixXd alpha;
  if (alphaInit && alphaInit->rows() == p && alphaInit->cols() == M)
    alpha = *alphaInit;
  else
    alpha = sys.betaTilde.unaryExpr(
        [](double b) { return b > 0.0 ? 1.0 : (b < 0.0 ? -1.0 : 0.0); });

  CoefMatrix beta = reconstruct(d, alpha, s);
  fit.objTrace.push_back(decomposition_objective(sys, beta, d, alpha, pen.lambda));

  const VectorXd unitWeights = VectorXd::Ones(p);
  bool innerOk = true;

  for (int iter = 0; iter < kOuterMaxIter; ++iter) {
    // alpha update: per-outcome adaptive lasso with the d and betaTilde
    // scales folded into the design columns.
    for (int m = 0; m < M; ++m) {
      MatrixXd dm = sys.halves[m];
      VectorXd colScale = d.array() * s.col(m).array();
      dm = dm * colScale.asDiagonal();
      VectorXd a0 = alpha.col(m);
      WeightedLassoResult r = weighted_lasso(dm, sys.responses[m], unitWeights,
                                             pen.lambda, &a0, false);
      innerOk = innerOk && r.converged;
      alpha.col(m) = r.coef;
    }
    beta = reconstruct(d, alpha, s);
    fit.objTrace.push_back(decomposition_objective(sys, beta, d, alpha, pen.lambda));

    // d update: stacked design with one column per predictor.
    MatrixXd dDesign(static_cast<long>(M) * p, p);
    VectorXd dResponse(static_cast<long>(M) * p);
    for (int m = 0; m < M; ++m) {
      VectorXd colScale = alpha.col(m).array() * s.col(m).array();
      dDesign.middleRows(static_cast<long>(m) * p, p) =
          sys.halves[m] * colScale.asDiagonal();
      dResponse.segment(static_cast<long>(m) * p, p) = sys.responses[m];
    }
    VectorXd d0 = d;
    WeightedLassoResult rd =
        weighted_lasso(dDesign, dResponse, unitWeights, 1.0, &d0, pen.nonneg);
    innerOk = innerOk && rd.converged;
    d = rd.coef;

    CoefMatrix betaNew = reconstruct(d, alpha, s);
    fit.objTrace.push_back(decomposition_objective(sys, betaNew, d, alpha, pen.lambda));
    const double change = (betaNew - beta).cwiseAbs().maxCoeff();
    beta = std::move(betaNew);
    ++fit.iterations;
    if (change < kOuterTol) {
      fit.converged = true;
      break;
    }
  }
  fit.converged = fit.converged && innerOk;

  // Reporting convention: fold signs into alpha and scale rows so that
  // max_m |alpha_jm| = 1; betaHat is invariant to this.
  for (int j = 0; j < p; ++j) {
    double sign = d[j] < 0.0 ? -1.0 : 1.0;
    double rowMax = alpha.row(j).cwiseAbs().maxCoeff();
    if (d[j] == 0.0 || rowMax == 0.0) {
      d[j] = 0.0;
      alpha.row(j).setZero();
      continue;
    }
    alpha.row(j) *= sign / rowMax;
    d[j] = std::abs(d[j]) * rowMax;
  }
  beta = reconstruct(d, alpha, s);

  fit.betaHat = std::move(beta);
  fit.d = std::move(d);
  fit.alpha = std::move(alpha);
  fit.df = static_cast<int>((fit.betaHat.array() != 0.0).count());
  return fit;
}

double profiled_penalty(const CoefMatrix& beta, const MatrixXd& weights,
                        double lambda) {
  if (beta.rows() != weights.rows() || beta.cols() != weights.cols())
    throw ValidationError("profiled_penalty: shape mismatch");
  if (lambda < 0) throw ValidationError("profiled_penalty: lambda must be nonnegative");
  double total = 0.0;
  for (int j = 0; j < beta.rows(); ++j) {
    double sj = 0.0;
    for (int m = 0; m < beta.cols(); ++m) {
      const double b = beta(j, m);
      if (b == 0.0) continue;
      const double w = weights(j, m);
      if (!std::isfinite(w)) return kInf;  // sentinel: excluded entry is nonzero
      sj += w * std::abs(b);
    }
    total += 2.0 * std::sqrt(lambda * sj);
  }
  return total;
}

namespace {

// KKT bound: with d = 1 the first alpha sweep zeroes coordinate (j, m) iff
// |s_jm * (info_m betaTilde_m)_j| <= lambda / 2, after which d collapses too.
double lambda_upper_bound(const QuadraticSystem& sys, const MatrixXd& weights) {
  const MatrixXd s = scales_from_weights(weights);
  double bound = 0.0;
  for (int m = 0; m < sys.M(); ++m) {
    VectorXd v = sys.infos[m] * sys.betaTilde.col(m);
    for (int j = 0; j < sys.p(); ++j)
      bound = std::max(bound, 2.0 * std::abs(s(j, m) * v[j]));
  }
  return bound;
}

int df_at(const QuadraticSystem& sys, const PenaltySpec& penTemplate, double lambda) {
  PenaltySpec pen = penTemplate;
  pen.lambda = lambda;
  return fit_hierarchical(sys, pen).df;
}

}  // namespace

double lambda_max(const QuadraticSystem& sys, const PenaltySpec& penTemplate) {
  double hi = lambda_upper_bound(sys, penTemplate.weights);
  if (hi <= 0.0) return 1.0;  // betaTilde identically zero; any lambda works
  hi *= 1.0 + 1e-6;
  double lo = hi * 1e-6;
  if (df_at(sys, penTemplate, lo) == 0) return lo;
  for (int it = 0; it < 40 && hi / lo > 1.001; ++it) {
    double mid = std::sqrt(lo * hi);
    if (df_at(sys, penTemplate, mid) == 0)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

std::vector<double> default_lambda_grid(const QuadraticSystem& sys,
                                        const PenaltySpec& penTemplate,
                                        int points, double ratio) {
  if (points < 1) throw ValidationError("lambda grid needs at least one point");
  const double top = lambda_max(sys, penTemplate);
  std::vector<double> grid;
  grid.reserve(points);
  if (points == 1) {
    grid.push_back(top);
    return grid;
  }
  const double logTop = std::log(top);
  const double logBot = std::log(top * ratio);
  for (int i = 0; i < points; ++i) {
    double f = static_cast<double>(i) / (points - 1);
    grid.push_back(std::exp(logTop + f * (logBot - logTop)));
  }
  return grid;
}

double bic_multiplier(int n) {
  return std::min(std::pow(static_cast<double>(n), 0.1),
                  std::log(static_cast<double>(n)));
}

SparseFit tune_bic(const QuadraticSystem& sys, const std::vector<double>& grid,
                   bool nonneg) {
  if (grid.empty()) throw ValidationError("tune_bic: empty lambda grid");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());

  const double mult = bic_multiplier(sys.n);
  PenaltySpec pen = PenaltySpec::fromBetaTilde(sys.betaTilde, sorted.front(), nonneg);

  SparseFit best;
  bool haveBest = false;
  double bestCrit = kInf;
  const MatrixXd* warm = nullptr;
  MatrixXd warmAlpha;
  int failures = 0;

  for (double lam : sorted) {
    pen.lambda = lam;
    SparseFit f;
    try {
      f = fit_hierarchical(sys, pen, warm);
    } catch (const NumericError&) {
      ++failures;
      continue;
    }
    warmAlpha = f.alpha;
    warm = &warmAlpha;
    const double crit = quad_loss(sys, f.betaHat) + mult * f.df;
    f.bic = crit / sys.n;
    if (crit < bestCrit) {  // strict: ties keep the larger (sparser) lambda
      bestCrit = crit;
      best = std::move(f);
      haveBest = true;
    }
  }
  if (!haveBest)
    throw NumericError("tune_bic: all " + std::to_string(failures) + " fits failed");
  return best;
}

SparseFit tune_bic(const QuadraticSystem& sys) {
  PenaltySpec tmpl = PenaltySpec::fromBetaTilde(sys.betaTilde, 1.0);
  return tune_bic(sys, default_lambda_grid(sys, tmpl), false);
}

}  // namespace smrt
