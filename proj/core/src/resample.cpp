#include "smrt/resample.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "json_util.hpp"
#include "smrt/parallel.hpp"
#include "smrt/rng.hpp"

namespace smrt {

namespace {
constexpr std::uint64_t kPerturbTag = 0x7065727475726221ULL;
}

CoefMatrix draw_perturbed_initial(const std::vector<MarginalFit>& fits,
                                  const VectorXd& g) {
  if (fits.empty()) throw ValidationError("no marginal fits");
  const int p = static_cast<int>(fits[0].betaTilde.size());
  const int M = static_cast<int>(fits.size());
  if ((g.array() <= 0.0).any())
    throw ValidationError("perturbation multipliers must be positive");

  CoefMatrix out(p, M);
  VectorXd gm1 = g.array() - 1.0;
  for (int m = 0; m < M; ++m) {
    const MarginalFit& f = fits[m];
    if (f.scores.rows() != g.size())
      throw ValidationError("perturbation vector length does not match n");
    VectorXd u = f.scores.transpose() * gm1;
    Eigen::LLT<MatrixXd> llt(f.profileInfo);
    if (llt.info() != Eigen::Success)
      throw NumericError("profile information not positive definite");
    out.col(m) = f.betaTilde + llt.solve(u);
    for (int j = 0; j < p; ++j)
      if (f.betaTilde[j] == 0.0) out(j, m) = 0.0;
  }
  return out;
}

PerturbDraws perturb_fit(const QuadraticSystem& sys,
                         const std::vector<MarginalFit>& fits, int B,
                         std::uint64_t seed, double lambda,
                         const PerturbOptions& opts) {
  if (B < 2) throw ValidationError("perturb_fit needs B >= 2");
  const int n = sys.n;
  const int p = sys.p();
  const int M = sys.M();

  PerturbDraws draws;
  draws.B = B;
  draws.n = n;
  draws.seed = seed;
  draws.gDist = opts.law == PerturbLaw::Exponential ? "exponential" : "ones";
  draws.betaTildeStar.assign(B, CoefMatrix());
  draws.betaHatStar.assign(B, CoefMatrix());
  std::vector<char> failed(B, 0);

  parallel_for(opts.threads, static_cast<std::size_t>(B), [&](std::size_t b) {
    RngStream rng = RngStream::derive(seed, {kPerturbTag, b});
    VectorXd g(n);
    if (opts.law == PerturbLaw::Exponential)
      for (int i = 0; i < n; ++i) g[i] = rng.exponential();
    else
      g.setOnes();
    try {
      CoefMatrix bts = draw_perturbed_initial(fits, g);
      QuadraticSystem sysStar = sys;
      for (int m = 0; m < M; ++m)
        sysStar.responses[m] = sys.halves[m] * bts.col(m);
      sysStar.betaTilde = bts;
      PenaltySpec pen = PenaltySpec::fromBetaTilde(bts, lambda);
      SparseFit f = fit_hierarchical(sysStar, pen);
      draws.betaTildeStar[b] = std::move(bts);
      draws.betaHatStar[b] = std::move(f.betaHat);
    } catch (const NumericError&) {
      failed[b] = 1;
    }
  });

  int nFailed = 0;
  for (int b = 0; b < B; ++b)
    if (failed[b]) {
      draws.failedDraws.push_back(b);
      ++nFailed;
    }
  if (nFailed > opts.maxFailFraction * B)
    throw NumericError("perturbation resampling: " + std::to_string(nFailed) +
                       " of " + std::to_string(B) + " draws failed");
  if (B - nFailed < 2)
    throw NumericError("perturbation resampling: fewer than 2 usable draws");

  // Entrywise sample SD over the successful draws; constant entries give an
  // exact zero rather than rounding residue.
  draws.sigmaHat = MatrixXd::Zero(p, M);
  std::vector<double> sample;
  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < p; ++j) {
      sample.clear();
      for (int b = 0; b < B; ++b)
        if (!failed[b]) sample.push_back(draws.betaHatStar[b](j, m));
      const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
      if (*lo == *hi) continue;
      double mean = 0.0;
      for (double v : sample) mean += v;
      mean /= sample.size();
      double ss = 0.0;
      for (double v : sample) ss += (v - mean) * (v - mean);
      draws.sigmaHat(j, m) = std::sqrt(ss / (sample.size() - 1));
    }
  }
  return draws;
}

double quantile_interp(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile level outside [0,1]");
  std::sort(v.begin(), v.end());
  const int n = static_cast<int>(v.size());
  double h = n * q + 0.5;  // 1-based fractional rank
  if (h <= 1.0) return v.front();
  if (h >= n) return v.back();
  int lo = static_cast<int>(std::floor(h));
  double frac = h - lo;
  return v[lo - 1] + frac * (v[lo] - v[lo - 1]);
}

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0))
    throw ValidationError("normal quantile needs probability in (0,1)");
  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double pl = 0.02425;
  double x;
  if (prob < pl) {
    double u = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
        ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
  } else if (prob <= 1.0 - pl) {
    double u = prob - 0.5, t = u * u;
    x = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * u /
        (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0);
  } else {
    double u = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
        ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0);
  }
  // One Newton step against the exact CDF.
  const double invSqrt2 = 0.7071067811865475244;
  const double invSqrt2Pi = 0.3989422804014326779;
  double err = 0.5 * std::erfc(-x * invSqrt2) - prob;
  x -= err / (invSqrt2Pi * std::exp(-0.5 * x * x));
  return x;
}

CiMatrix confidence_intervals(const PerturbDraws& draws, const CoefMatrix& betaHat,
                              double level, CiMethod method) {
  if (!(level > 0.0 && level < 1.0))
    throw ValidationError("confidence level must be inside (0,1)");
  const int p = static_cast<int>(betaHat.rows());
  const int M = static_cast<int>(betaHat.cols());
  CiMatrix ci;
  ci.lo.resize(p, M);
  ci.hi.resize(p, M);

  if (method == CiMethod::Normal) {
    const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    ci.lo = betaHat - z * draws.sigmaHat;
    ci.hi = betaHat + z * draws.sigmaHat;
    return ci;
  }

  const int usable = draws.B - static_cast<int>(draws.failedDraws.size());
  if (usable < 20)
    throw ValidationError("quantile intervals need at least 20 draws");
  const double aHalf = (1.0 - level) / 2.0;
  std::vector<char> failed(draws.B, 0);
  for (int b : draws.failedDraws) failed[b] = 1;
  std::vector<double> sample;
  sample.reserve(usable);
  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < p; ++j) {
      sample.clear();
      for (int b = 0; b < draws.B; ++b)
        if (!failed[b]) sample.push_back(draws.betaHatStar[b](j, m));
      ci.lo(j, m) = quantile_interp(sample, aHalf);
      ci.hi(j, m) = quantile_interp(sample, 1.0 - aHalf);
    }
  }
  return ci;
}

void write_draws_jsonl(const PerturbDraws& draws, std::ostream& os) {
  nlohmann::json meta;
  meta["B"] = draws.B;
  meta["n"] = draws.n;
  meta["seed"] = draws.seed;
  meta["gDist"] = draws.gDist;
  meta["failedDraws"] = draws.failedDraws;
  os << meta.dump() << '\n';
  for (int b = 0; b < draws.B; ++b) {
    nlohmann::json line;
    line["b"] = b;
    line["betaTildeStar"] = matrix_to_json(draws.betaTildeStar[b]);
    line["betaHatStar"] = matrix_to_json(draws.betaHatStar[b]);
    os << line.dump() << '\n';
  }
}

PerturbDraws read_draws_jsonl(std::istream& is) {
  PerturbDraws draws;
  std::string line;
  if (!std::getline(is, line))
    throw ValidationError("draws file is empty");
  nlohmann::json meta = nlohmann::json::parse(line);
  draws.B = meta.at("B").get<int>();
  draws.n = meta.at("n").get<int>();
  draws.seed = meta.at("seed").get<std::uint64_t>();
  draws.gDist = meta.at("gDist").get<std::string>();
  draws.failedDraws = meta.at("failedDraws").get<std::vector<int>>();
  draws.betaTildeStar.assign(draws.B, CoefMatrix());
  draws.betaHatStar.assign(draws.B, CoefMatrix());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    int b = j.at("b").get<int>();
    if (b < 0 || b >= draws.B) throw ValidationError("draw index out of range");
    draws.betaTildeStar[b] = matrix_from_json(j.at("betaTildeStar"));
    draws.betaHatStar[b] = matrix_from_json(j.at("betaHatStar"));
  }

  std::vector<char> failed(draws.B, 0);
  for (int b : draws.failedDraws) failed[b] = 1;
  int used = 0;
  CoefMatrix mean;
  for (int b = 0; b < draws.B; ++b) {
    if (failed[b]) continue;
    if (draws.betaHatStar[b].size() == 0)
      throw ValidationError("draws file is missing draw " + std::to_string(b));
    if (used == 0)
      mean = draws.betaHatStar[b];
    else
      mean += draws.betaHatStar[b];
    ++used;
  }
  if (used < 2) throw ValidationError("draws file holds fewer than 2 usable draws");
  mean /= used;
  draws.sigmaHat = MatrixXd::Zero(mean.rows(), mean.cols());
  for (int b = 0; b < draws.B; ++b) {
    if (failed[b]) continue;
    draws.sigmaHat.array() += (draws.betaHatStar[b] - mean).array().square();
  }
  draws.sigmaHat = (draws.sigmaHat / (used - 1)).cwiseSqrt();
  return draws;
}

}  // namespace smrt
