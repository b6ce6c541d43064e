#include "smrt/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "smrt/parallel.hpp"

namespace smrt {

namespace {

constexpr std::uint64_t kRepTag = 0x7265706c69636174ULL;
constexpr std::uint64_t kGenTag = 1;
constexpr std::uint64_t kPerturbSeedTag = 2;
constexpr std::uint64_t kPermSeedTag = 3;

double norm_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

}  // namespace

void SimConfig::validate() const {
  if (reps < 1) throw ValidationError("simulation needs reps >= 1");
  if (n < 1 || p < 1 || M < 1) throw ValidationError("invalid simulation sizes");
  if (!(maf > 0.0 && maf < 1.0)) throw ValidationError("maf must be inside (0,1)");
  if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("rho must be in [0,1)");
  if (levels < 2) throw ValidationError("need at least 2 outcome levels");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha outside (0,1)");
  if (beta0.size() != 0 && (beta0.rows() != p || beta0.cols() != M))
    throw ValidationError("beta0 must be p x M");
  if (beta0.size() == 0 && !(p == 30 && M == 4))
    throw ValidationError("beta0 required unless p = 30 and M = 4");
  for (int k : kList)
    if (k < 1 || k > M) throw ValidationError("k outside 1..M");
  if ((doPermutationTests || doResampleCis) && B < 2)
    throw ValidationError("references need B >= 2");
}

CoefMatrix paper_beta0() {
  CoefMatrix b = CoefMatrix::Zero(30, 4);
  const int active[4] = {20, 16, 12, 8};
  const double value[4] = {1.0, 0.5, 1.0, 0.5};
  for (int m = 0; m < 4; ++m)
    for (int j = 0; j < active[m]; ++j) b(j, m) = value[m];
  return b;
}

Dataset generate(const SimConfig& cfg, RngStream& rng) {
  const int n = cfg.n, p = cfg.p, M = cfg.M;
  const CoefMatrix beta0 = cfg.beta0.size() ? cfg.beta0 : paper_beta0();

  Dataset ds;
  ds.X.resize(n, p);
  const double p0 = cfg.maf * cfg.maf;
  const double p1 = 2.0 * cfg.maf * (1.0 - cfg.maf);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      const double u = rng.uniform01();
      ds.X(i, j) = u < p0 ? 0.0 : (u < p0 + p1 ? 1.0 : 2.0);
    }
  }

  // Latent outcomes y = exp(x'beta0 + eps) with logistic eps; the
  // exchangeable correlation comes from a shared normal factor.
  MatrixXd y(n, M);
  const double sharedW = std::sqrt(cfg.rho);
  const double ownW = std::sqrt(1.0 - cfg.rho);
  for (int i = 0; i < n; ++i) {
    const double shared = rng.normal();
    for (int m = 0; m < M; ++m) {
      const double z = sharedW * shared + ownW * rng.normal();
      const double u = norm_cdf(z);
      const double eps = std::log(u / (1.0 - u));
      y(i, m) = std::exp(ds.X.row(i).dot(beta0.col(m)) + eps);
    }
  }

  for (int m = 0; m < M; ++m) {
    OutcomeColumn col;
    col.kind = OutcomeKind::Ordinal;
    col.levels = cfg.levels;
    col.values = rank_discretize(y.col(m), cfg.levels);
    ds.outcomes.push_back(std::move(col));
    ds.outcomeNames.push_back("y" + std::to_string(m + 1));
  }
  for (int j = 0; j < p; ++j) ds.predictorNames.push_back("x" + std::to_string(j + 1));
  ds.validate();
  return ds;
}

double fwer_fraction(const std::vector<std::vector<int>>& rejected,
                     const CoefMatrix& beta0) {
  const int p = static_cast<int>(beta0.rows());
  const int M = static_cast<int>(beta0.cols());
  int eligible = 0, hit = 0;
  for (int j = 0; j < p; ++j) {
    bool hasNull = false;
    for (int m = 0; m < M; ++m) hasNull = hasNull || beta0(j, m) == 0.0;
    if (!hasNull) continue;
    ++eligible;
    for (int m : rejected[j]) {
      if (beta0(j, m) == 0.0) {
        ++hit;
        break;
      }
    }
  }
  return eligible == 0 ? 0.0 : static_cast<double>(hit) / eligible;
}

double power_fraction(const std::vector<std::vector<int>>& rejected,
                      const CoefMatrix& beta0) {
  const int p = static_cast<int>(beta0.rows());
  const int M = static_cast<int>(beta0.cols());
  int nonNull = 0, caught = 0;
  for (int j = 0; j < p; ++j) {
    for (int m = 0; m < M; ++m) {
      if (beta0(j, m) == 0.0) continue;
      ++nonNull;
      if (std::binary_search(rejected[j].begin(), rejected[j].end(), m)) ++caught;
    }
  }
  return nonNull == 0 ? 0.0 : static_cast<double>(caught) / nonNull;
}

namespace {

struct MethodKey {
  std::string method;
  int k;
  bool operator<(const MethodKey& o) const {
    return method != o.method ? method < o.method : k < o.k;
  }
};

struct RepOutcome {
  CoefMatrix betaHat, betaTilde;
  MatrixXd sigmaHat;         // empty when CIs are off
  MatrixXd sigmaAsymp;       // sigmaTilde / sqrt(n)
  Eigen::ArrayXXd coverA, coverN, coverQ;  // 1/0, empty when CIs are off
  std::map<MethodKey, std::vector<std::vector<int>>> rejections;
  double lambda = 0.0;
  int df = 0;
  CoefMatrix betaDagger;     // marginal comparator, empty when off
};

// Per-outcome adaptive lasso at per-outcome BIC-tuned lambda: the
// marginal-model comparator (no joint d_j coupling).
VectorXd marginal_adaptive_lasso(const QuadraticSystem& sys, int m) {
  const int p = sys.p();
  VectorXd betaT = sys.betaTilde.col(m);
  VectorXd w = betaT.unaryExpr([](double b) {
    return b == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / std::abs(b);
  });
  // KKT bound for the weighted lasso at beta = 0.
  VectorXd z = sys.infos[m] * betaT;
  double lamMax = 0.0;
  for (int j = 0; j < p; ++j)
    if (std::isfinite(w[j])) lamMax = std::max(lamMax, 2.0 * std::abs(z[j]) / w[j]);
  if (lamMax <= 0.0) return VectorXd::Zero(p);
  const double mult = bic_multiplier(sys.n);
  VectorXd best = betaT;
  double bestCrit = std::numeric_limits<double>::infinity();
  VectorXd warm = VectorXd::Zero(p);
  for (int i = 0; i < 50; ++i) {
    const double lam = lamMax * std::pow(1e-4, i / 49.0);
    WeightedLassoResult r =
        weighted_lasso(sys.halves[m], sys.responses[m], w, lam, &warm, false);
    warm = r.coef;
    const double loss = (sys.responses[m] - sys.halves[m] * r.coef).squaredNorm();
    const int df = static_cast<int>((r.coef.array() != 0.0).count());
    const double crit = loss + mult * df;
    if (crit < bestCrit) {
      bestCrit = crit;
      best = r.coef;
    }
  }
  return best;
}

RepOutcome run_replicate(const SimConfig& cfg, const CoefMatrix& beta0, int rep) {
  RngStream gen = RngStream::derive(cfg.seed, {kRepTag, static_cast<std::uint64_t>(rep), kGenTag});
  SimConfig local = cfg;
  local.beta0 = beta0;
  Dataset ds = generate(local, gen);

  std::vector<MarginalFit> fits;
  fits.reserve(cfg.M);
  for (int m = 0; m < cfg.M; ++m) fits.push_back(fit_marginal(ds, m));
  QuadraticSystem sys = assemble(fits);
  MatrixXd sigmaT = sigma_tilde_matrix(fits);

  SparseFit sf;
  if (cfg.lambdaGrid.empty())
    sf = tune_bic(sys);
  else
    sf = tune_bic(sys, cfg.lambdaGrid);

  RepOutcome out;
  out.betaHat = sf.betaHat;
  out.betaTilde = sys.betaTilde;
  out.sigmaAsymp = sigmaT / std::sqrt(static_cast<double>(cfg.n));
  out.lambda = sf.lambda;
  out.df = sf.df;

  if (cfg.doResampleCis) {
    const int ciB = cfg.ciB > 0 ? cfg.ciB : cfg.B;
    std::uint64_t subSeed =
        RngStream::derive(cfg.seed, {kRepTag, static_cast<std::uint64_t>(rep), kPerturbSeedTag}).next();
    PerturbDraws draws = perturb_fit(sys, fits, ciB, subSeed, sf.lambda);
    out.sigmaHat = draws.sigmaHat;
    const double z = normal_quantile(0.975);
    CiMatrix ciQ = confidence_intervals(draws, sf.betaHat, 0.95, CiMethod::Quantile);
    CiMatrix ciN = confidence_intervals(draws, sf.betaHat, 0.95, CiMethod::Normal);
    out.coverA = ((beta0.array() >= (sf.betaHat - z * out.sigmaAsymp).array()) &&
                  (beta0.array() <= (sf.betaHat + z * out.sigmaAsymp).array()))
                     .cast<double>();
    out.coverN = ((beta0.array() >= ciN.lo.array()) && (beta0.array() <= ciN.hi.array()))
                     .cast<double>();
    out.coverQ = ((beta0.array() >= ciQ.lo.array()) && (beta0.array() <= ciQ.hi.array()))
                     .cast<double>();
  }

  if (cfg.doPermutationTests) {
    std::uint64_t refSeed =
        RngStream::derive(cfg.seed, {kRepTag, static_cast<std::uint64_t>(rep), kPermSeedTag}).next();
    ReferencePair refs = build_reference_pair(ds, fits, sf.lambda, cfg.B, refSeed);
    MatrixXd t = test_stats(sf.betaHat, sigmaT, cfg.n);
    MatrixXd tInit = test_stats(sys.betaTilde, sigmaT, cfg.n);
    const double psi = cfg.psiEffective();
    for (int k : cfg.kList) {
      TestResult r = smrt_test(t, refs.sparse, psi, k, /*withAdjP=*/false);
      out.rejections[{"SMRT", k}] = std::move(r.rejected);
    }
    TestResult mrt = mrt_test(tInit, refs.initial, psi, 1, /*withAdjP=*/false);
    out.rejections[{"MRT", 1}] = std::move(mrt.rejected);
    TestResult sup = sup_test(t, refs.sparse, cfg.alpha);
    out.rejections[{"Sup", 1}] = std::move(sup.rejected);
    TestResult bon = bonferroni_test(t, refs.sparse, cfg.alpha, false);
    out.rejections[{"Bonferroni", 1}] = std::move(bon.rejected);
  }

  if (cfg.doMarginalComparator) {
    out.betaDagger.resize(cfg.p, cfg.M);
    for (int m = 0; m < cfg.M; ++m)
      out.betaDagger.col(m) = marginal_adaptive_lasso(sys, m);
  }
  return out;
}

}  // namespace

ExperimentMetrics run_experiment(const SimConfig& cfg) {
  cfg.validate();
  const CoefMatrix beta0 = cfg.beta0.size() ? cfg.beta0 : paper_beta0();
  const int p = cfg.p, M = cfg.M, reps = cfg.reps;

  std::vector<RepOutcome> outs(reps);
  parallel_for(cfg.threads, static_cast<std::size_t>(reps),
               [&](std::size_t r) { outs[r] = run_replicate(cfg, beta0, static_cast<int>(r)); });

  ExperimentMetrics mx;
  mx.n = cfg.n;
  mx.p = p;
  mx.M = M;
  mx.reps = reps;
  mx.B = cfg.B;
  mx.alpha = cfg.alpha;
  mx.psi = cfg.psiEffective();
  mx.seed = cfg.seed;
  mx.hasCis = cfg.doResampleCis;
  mx.hasTests = cfg.doPermutationTests;
  mx.hasComparator = cfg.doMarginalComparator;

  // Estimation aggregates per distinct |beta0| value.
  std::set<double> groupValues;
  for (int j = 0; j < p; ++j)
    for (int m = 0; m < M; ++m) groupValues.insert(std::abs(beta0(j, m)));
  for (double gv : groupValues) {
    GroupEstimation g;
    g.beta0Value = gv;
    std::vector<double> absBiasDiffs;
    for (int j = 0; j < p; ++j) {
      for (int m = 0; m < M; ++m) {
        if (std::abs(beta0(j, m)) != gv) continue;
        ++g.entries;
        double meanHat = 0, meanTilde = 0, meanSh = 0, meanSa = 0;
        double cA = 0, cN = 0, cQ = 0;
        for (const auto& o : outs) {
          meanHat += o.betaHat(j, m);
          meanTilde += o.betaTilde(j, m);
          meanSa += o.sigmaAsymp(j, m);
          if (cfg.doResampleCis) {
            meanSh += o.sigmaHat(j, m);
            cA += o.coverA(j, m);
            cN += o.coverN(j, m);
            cQ += o.coverQ(j, m);
          }
        }
        meanHat /= reps;
        meanTilde /= reps;
        double sd = 0;
        for (const auto& o : outs) sd += (o.betaHat(j, m) - meanHat) * (o.betaHat(j, m) - meanHat);
        sd = reps > 1 ? std::sqrt(sd / (reps - 1)) : 0.0;

        const double biasHat = meanHat - beta0(j, m);
        const double biasTilde = meanTilde - beta0(j, m);
        g.biasHat += biasHat;
        g.biasTilde += biasTilde;
        g.absBiasHat += std::abs(biasHat);
        g.absBiasTilde += std::abs(biasTilde);
        absBiasDiffs.push_back(std::abs(biasHat) - std::abs(biasTilde));
        g.empiricalSdHat += sd;
        g.meanAsympSe += meanSa / reps;
        if (cfg.doResampleCis) {
          g.meanSigmaHat += meanSh / reps;
          g.coverAsymp += cA / reps;
          g.coverNormal += cN / reps;
          g.coverQuantile += cQ / reps;
        }
      }
    }
    if (g.entries == 0) continue;
    const double inv = 1.0 / g.entries;
    g.biasHat *= inv;
    g.biasTilde *= inv;
    g.absBiasHat *= inv;
    g.absBiasTilde *= inv;
    g.empiricalSdHat *= inv;
    g.meanSigmaHat *= inv;
    g.meanAsympSe *= inv;
    g.coverAsymp *= inv;
    g.coverNormal *= inv;
    g.coverQuantile *= inv;
    double mean = 0;
    for (double d : absBiasDiffs) mean += d;
    mean /= absBiasDiffs.size();
    double var = 0;
    for (double d : absBiasDiffs) var += (d - mean) * (d - mean);
    g.absBiasPairedSe = absBiasDiffs.size() > 1
                            ? std::sqrt(var / (absBiasDiffs.size() - 1) / absBiasDiffs.size())
                            : 0.0;
    mx.groups.push_back(g);
  }

  // Sparsity.
  {
    long nullEntries = 0, zeroed = 0;
    long nullPreds = 0, eliminated = 0;
    double dfSum = 0, lamSum = 0;
    for (const auto& o : outs) {
      dfSum += o.df;
      lamSum += o.lambda;
      for (int j = 0; j < p; ++j) {
        bool rowNull = true, rowAllZero = true;
        for (int m = 0; m < M; ++m) {
          if (beta0(j, m) == 0.0) {
            ++nullEntries;
            if (o.betaHat(j, m) == 0.0) ++zeroed;
          } else {
            rowNull = false;
          }
          rowAllZero = rowAllZero && o.betaHat(j, m) == 0.0;
        }
        if (rowNull) {
          ++nullPreds;
          if (rowAllZero) ++eliminated;
        }
      }
    }
    mx.sparsity.nullZeroFrac = nullEntries ? static_cast<double>(zeroed) / nullEntries : 0.0;
    mx.sparsity.nullPredictorElimRate =
        nullPreds ? static_cast<double>(eliminated) / nullPreds : 0.0;
    mx.sparsity.meanDf = dfSum / reps;
    mx.sparsity.meanLambda = lamSum / reps;
  }

  // Testing.
  if (cfg.doPermutationTests) {
    std::vector<MethodKey> keys;
    for (const auto& [key, rej] : outs[0].rejections) keys.push_back(key);
    // Pattern groups: number of truly associated outcomes per predictor.
    std::map<int, std::vector<int>> patternPreds;
    for (int j = 0; j < p; ++j) {
      int assoc = 0;
      for (int m = 0; m < M; ++m) assoc += beta0(j, m) != 0.0;
      if (assoc > 0) patternPreds[assoc].push_back(j);
    }
    for (const auto& key : keys) {
      MethodTesting mt;
      mt.method = key.method;
      mt.k = key.k;
      for (const auto& o : outs) {
        const auto& rej = o.rejections.at(key);
        mt.perRepFwer.push_back(fwer_fraction(rej, beta0));
        mt.perRepPower.push_back(power_fraction(rej, beta0));
      }
      mt.fwer = 0;
      mt.avgPower = 0;
      for (double v : mt.perRepFwer) mt.fwer += v;
      for (double v : mt.perRepPower) mt.avgPower += v;
      mt.fwer /= reps;
      mt.avgPower /= reps;

      for (const auto& [assoc, preds] : patternPreds) {
        MethodTesting::Pattern pat;
        pat.numAssociated = assoc;
        pat.perOutcomePower.assign(M, std::numeric_limits<double>::quiet_NaN());
        for (int m = 0; m < M; ++m) {
          bool anyNonNull = false;
          for (int j : preds) anyNonNull = anyNonNull || beta0(j, m) != 0.0;
          if (!anyNonNull) continue;
          long cnt = 0, hit = 0;
          for (const auto& o : outs) {
            for (int j : preds) {
              if (beta0(j, m) == 0.0) continue;
              ++cnt;
              const auto& r = o.rejections.at(key)[j];
              if (std::binary_search(r.begin(), r.end(), m)) ++hit;
            }
          }
          pat.perOutcomePower[m] = cnt ? static_cast<double>(hit) / cnt : 0.0;
        }
        long cnt = 0, hit = 0;
        for (const auto& o : outs) {
          for (int j : preds) {
            ++cnt;
            bool all = true;
            const auto& r = o.rejections.at(key)[j];
            for (int m = 0; m < M; ++m)
              if (beta0(j, m) != 0.0 &&
                  !std::binary_search(r.begin(), r.end(), m))
                all = false;
            if (all) ++hit;
          }
        }
        pat.jointPower = cnt ? static_cast<double>(hit) / cnt : 0.0;
        mt.patterns.push_back(std::move(pat));
      }
      mx.methods.push_back(std::move(mt));
    }
  }

  // Marginal comparator.
  if (cfg.doMarginalComparator) {
    long nullEntries = 0, zeroed = 0, nullPreds = 0, eliminated = 0;
    long nonNull = 0, kept = 0, keptJoint = 0;
    for (const auto& o : outs) {
      for (int j = 0; j < p; ++j) {
        bool rowNull = true, rowAllZero = true;
        for (int m = 0; m < M; ++m) {
          if (beta0(j, m) == 0.0) {
            ++nullEntries;
            if (o.betaDagger(j, m) == 0.0) ++zeroed;
          } else {
            rowNull = false;
            ++nonNull;
            if (o.betaDagger(j, m) != 0.0) ++kept;
            if (o.betaHat(j, m) != 0.0) ++keptJoint;
          }
          rowAllZero = rowAllZero && o.betaDagger(j, m) == 0.0;
        }
        if (rowNull) {
          ++nullPreds;
          if (rowAllZero) ++eliminated;
        }
      }
    }
    mx.comparator.nullZeroFrac = nullEntries ? static_cast<double>(zeroed) / nullEntries : 0.0;
    mx.comparator.nullPredictorElimRate =
        nullPreds ? static_cast<double>(eliminated) / nullPreds : 0.0;
    mx.comparator.nonNullSelectionRate = nonNull ? static_cast<double>(kept) / nonNull : 0.0;
    mx.comparator.jointNonNullSelectionRate =
        nonNull ? static_cast<double>(keptJoint) / nonNull : 0.0;
  }

  return mx;
}

}  // namespace smrt
