#include "smrt/serialize.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "json_util.hpp"

namespace smrt {

namespace {

const char* ref_kind_name(RefKind k) {
  return k == RefKind::Permutation ? "permutation" : "resampling";
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

}  // namespace

FitArtifact make_fit_artifact(const Dataset& ds, const std::vector<MarginalFit>& fits,
                              const SparseFit& fit, std::uint64_t seed) {
  FitArtifact a;
  a.n = ds.n();
  a.p = ds.p();
  a.M = ds.M();
  a.predictorNames = ds.predictorNames;
  a.outcomeNames = ds.outcomeNames;
  a.fit = fit;
  a.betaTilde.resize(a.p, a.M);
  a.sigmaTilde = sigma_tilde_matrix(fits);
  for (int m = 0; m < a.M; ++m) {
    a.betaTilde.col(m) = fits[m].betaTilde;
    MarginalSummary s;
    s.m = m;
    s.thresholds = fits[m].thresholds;
    s.logLik = fits[m].logLik;
    s.iterations = fits[m].iterations;
    s.converged = fits[m].converged;
    s.ridged = fits[m].ridged;
    a.marginals.push_back(std::move(s));
  }
  a.seed = seed;
  return a;
}

void write_fit_json(const FitArtifact& a, std::ostream& os) {
  nlohmann::json j;
  j["n"] = a.n;
  j["p"] = a.p;
  j["M"] = a.M;
  j["predictorNames"] = a.predictorNames;
  j["outcomeNames"] = a.outcomeNames;
  j["lambda"] = a.fit.lambda;
  j["df"] = a.fit.df;
  j["bic"] = a.fit.bic;
  j["iterations"] = a.fit.iterations;
  j["converged"] = a.fit.converged;
  j["betaHat"] = matrix_to_json(a.fit.betaHat);
  j["d"] = vector_to_json(a.fit.d);
  j["alpha"] = matrix_to_json(a.fit.alpha);
  j["betaTilde"] = matrix_to_json(a.betaTilde);
  j["sigmaTilde"] = matrix_to_json(a.sigmaTilde);
  j["seed"] = a.seed;
  j["marginals"] = nlohmann::json::array();
  for (const auto& s : a.marginals) {
    nlohmann::json m;
    m["m"] = s.m;
    m["thresholds"] = vector_to_json(s.thresholds);
    m["logLik"] = s.logLik;
    m["iterations"] = s.iterations;
    m["converged"] = s.converged;
    m["ridged"] = s.ridged;
    j["marginals"].push_back(m);
  }
  os << j.dump(2) << '\n';
}

FitArtifact read_fit_json(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ValidationError("invalid fit JSON: " + std::string(e.what()));
  }
  FitArtifact a;
  a.n = j.at("n").get<int>();
  a.p = j.at("p").get<int>();
  a.M = j.at("M").get<int>();
  a.predictorNames = j.at("predictorNames").get<std::vector<std::string>>();
  a.outcomeNames = j.at("outcomeNames").get<std::vector<std::string>>();
  a.fit.lambda = j.at("lambda").get<double>();
  a.fit.df = j.at("df").get<int>();
  a.fit.bic = j.at("bic").get<double>();
  a.fit.iterations = j.at("iterations").get<int>();
  a.fit.converged = j.at("converged").get<bool>();
  a.fit.betaHat = matrix_from_json(j.at("betaHat"));
  a.fit.d = vector_from_json(j.at("d"));
  a.fit.alpha = matrix_from_json(j.at("alpha"));
  a.betaTilde = matrix_from_json(j.at("betaTilde"));
  a.sigmaTilde = matrix_from_json(j.at("sigmaTilde"));
  a.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& m : j.at("marginals")) {
    MarginalSummary s;
    s.m = m.at("m").get<int>();
    s.thresholds = vector_from_json(m.at("thresholds"));
    s.logLik = m.at("logLik").get<double>();
    s.iterations = m.at("iterations").get<int>();
    s.converged = m.at("converged").get<bool>();
    s.ridged = m.at("ridged").get<bool>();
    a.marginals.push_back(std::move(s));
  }
  return a;
}

namespace {

nlohmann::json test_result_to_json(const TestResult& r,
                                   const std::vector<std::string>& outcomeNames) {
  nlohmann::json j;
  j["method"] = r.method;
  j["k"] = r.k;
  j["psi"] = r.psi;
  j["refKind"] = ref_kind_name(r.refKind);
  j["tStats"] = matrix_to_json(r.tStats);
  nlohmann::json adj = nlohmann::json::array();
  for (int jj = 0; jj < r.adjP.rows(); ++jj) {
    nlohmann::json row = nlohmann::json::array();
    for (int m = 0; m < r.adjP.cols(); ++m) {
      if (std::isnan(r.adjP(jj, m)))
        row.push_back(nullptr);
      else
        row.push_back(r.adjP(jj, m));
    }
    adj.push_back(std::move(row));
  }
  j["adjP"] = std::move(adj);
  j["rejected"] = r.rejected;
  (void)outcomeNames;
  return j;
}

}  // namespace

void write_test_json(const std::vector<TestResult>& results,
                     const std::vector<std::string>& predictorNames,
                     const std::vector<std::string>& outcomeNames, std::ostream& os) {
  nlohmann::json j;
  j["predictorNames"] = predictorNames;
  j["outcomeNames"] = outcomeNames;
  j["results"] = nlohmann::json::array();
  for (const auto& r : results) j["results"].push_back(test_result_to_json(r, outcomeNames));
  os << j.dump(2) << '\n';
}

void write_test_tsv(const std::vector<TestResult>& results,
                    const std::vector<std::string>& predictorNames,
                    const std::vector<std::string>& outcomeNames, std::ostream& os) {
  os << "method\tk\tpredictor\toutcome\tt\tadjP\trejected\n";
  for (const auto& r : results) {
    for (std::size_t j = 0; j < predictorNames.size(); ++j) {
      for (std::size_t m = 0; m < outcomeNames.size(); ++m) {
        const bool rej = std::binary_search(r.rejected[j].begin(), r.rejected[j].end(),
                                            static_cast<int>(m));
        os << r.method << '\t' << r.k << '\t' << predictorNames[j] << '\t'
           << outcomeNames[m] << '\t' << fmt(r.tStats(j, m)) << '\t'
           << fmt(r.adjP(j, m)) << '\t' << (rej ? 1 : 0) << '\n';
      }
    }
  }
}

void write_ci_tsv(const FitArtifact& a, const CiMatrix* normal,
                  const CiMatrix* quantile, double level, std::ostream& os) {
  const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
  os << "predictor\toutcome\tbetaHat\tasympLo\tasympHi\tnormalLo\tnormalHi"
     << "\tquantileLo\tquantileHi\n";
  for (int j = 0; j < a.p; ++j) {
    for (int m = 0; m < a.M; ++m) {
      const double se = a.sigmaTilde(j, m) / std::sqrt(static_cast<double>(a.n));
      const double est = a.fit.betaHat(j, m);
      os << a.predictorNames[j] << '\t' << a.outcomeNames[m] << '\t' << fmt(est)
         << '\t' << fmt(est - z * se) << '\t' << fmt(est + z * se);
      if (normal)
        os << '\t' << fmt(normal->lo(j, m)) << '\t' << fmt(normal->hi(j, m));
      else
        os << "\tNA\tNA";
      if (quantile)
        os << '\t' << fmt(quantile->lo(j, m)) << '\t' << fmt(quantile->hi(j, m));
      else
        os << "\tNA\tNA";
      os << '\n';
    }
  }
}

void write_metrics_json(const ExperimentMetrics& m, std::ostream& os) {
  nlohmann::json j;
  j["n"] = m.n;
  j["p"] = m.p;
  j["M"] = m.M;
  j["reps"] = m.reps;
  j["B"] = m.B;
  j["alpha"] = m.alpha;
  j["psi"] = m.psi;
  j["seed"] = m.seed;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : m.groups) {
    nlohmann::json gj;
    gj["beta0"] = g.beta0Value;
    gj["entries"] = g.entries;
    gj["biasHat"] = g.biasHat;
    gj["biasTilde"] = g.biasTilde;
    gj["absBiasHat"] = g.absBiasHat;
    gj["absBiasTilde"] = g.absBiasTilde;
    gj["absBiasPairedSe"] = g.absBiasPairedSe;
    gj["empiricalSdHat"] = g.empiricalSdHat;
    gj["meanAsympSe"] = g.meanAsympSe;
    if (m.hasCis) {
      gj["meanSigmaHat"] = g.meanSigmaHat;
      gj["coverAsymp"] = g.coverAsymp;
      gj["coverNormal"] = g.coverNormal;
      gj["coverQuantile"] = g.coverQuantile;
    }
    j["groups"].push_back(gj);
  }
  j["sparsity"] = {{"nullZeroFrac", m.sparsity.nullZeroFrac},
                   {"nullPredictorElimRate", m.sparsity.nullPredictorElimRate},
                   {"meanDf", m.sparsity.meanDf},
                   {"meanLambda", m.sparsity.meanLambda}};
  if (m.hasTests) {
    j["methods"] = nlohmann::json::array();
    for (const auto& mt : m.methods) {
      nlohmann::json mo;
      mo["method"] = mt.method;
      mo["k"] = mt.k;
      mo["fwer"] = mt.fwer;
      mo["avgPower"] = mt.avgPower;
      mo["perRepFwer"] = mt.perRepFwer;
      mo["perRepPower"] = mt.perRepPower;
      mo["patterns"] = nlohmann::json::array();
      for (const auto& pat : mt.patterns) {
        nlohmann::json pj;
        pj["numAssociated"] = pat.numAssociated;
        nlohmann::json po = nlohmann::json::array();
        for (double v : pat.perOutcomePower) {
          if (std::isnan(v))
            po.push_back(nullptr);
          else
            po.push_back(v);
        }
        pj["perOutcomePower"] = std::move(po);
        pj["jointPower"] = pat.jointPower;
        mo["patterns"].push_back(pj);
      }
      j["methods"].push_back(mo);
    }
  }
  if (m.hasComparator) {
    j["marginalComparator"] = {
        {"nullZeroFrac", m.comparator.nullZeroFrac},
        {"nullPredictorElimRate", m.comparator.nullPredictorElimRate},
        {"nonNullSelectionRate", m.comparator.nonNullSelectionRate},
        {"jointNonNullSelectionRate", m.comparator.jointNonNullSelectionRate}};
  }
  os << j.dump(2) << '\n';
}

void write_metrics_tsv(const ExperimentMetrics& m, std::ostream& os) {
  os << "n\tfamily\tmethod\tk\tgroup\tmetric\tvalue\n";
  auto row = [&](const std::string& family, const std::string& method, int k,
                 const std::string& group, const std::string& metric, double value) {
    os << m.n << '\t' << family << '\t' << method << '\t' << k << '\t' << group
       << '\t' << metric << '\t' << fmt(value) << '\n';
  };
  for (const auto& g : m.groups) {
    const std::string grp = fmt(g.beta0Value);
    row("estimation", "betaHat", 0, grp, "bias", g.biasHat);
    row("estimation", "betaTilde", 0, grp, "bias", g.biasTilde);
    row("estimation", "betaHat", 0, grp, "absBias", g.absBiasHat);
    row("estimation", "betaTilde", 0, grp, "absBias", g.absBiasTilde);
    row("estimation", "betaHat", 0, grp, "empiricalSd", g.empiricalSdHat);
    row("estimation", "asymptotic", 0, grp, "meanSe", g.meanAsympSe);
    if (m.hasCis) {
      row("estimation", "resampling", 0, grp, "meanSe", g.meanSigmaHat);
      row("coverage", "asymptotic", 0, grp, "cover95", g.coverAsymp);
      row("coverage", "normal", 0, grp, "cover95", g.coverNormal);
      row("coverage", "quantile", 0, grp, "cover95", g.coverQuantile);
    }
  }
  row("sparsity", "betaHat", 0, "null", "zeroFrac", m.sparsity.nullZeroFrac);
  row("sparsity", "betaHat", 0, "nullPredictor", "elimRate",
      m.sparsity.nullPredictorElimRate);
  row("sparsity", "betaHat", 0, "all", "meanDf", m.sparsity.meanDf);
  for (const auto& mt : m.methods) {
    row("testing", mt.method, mt.k, "all", "fwer", mt.fwer);
    row("testing", mt.method, mt.k, "all", "avgPower", mt.avgPower);
    for (const auto& pat : mt.patterns) {
      const std::string grp = "assoc" + std::to_string(pat.numAssociated);
      for (std::size_t mm = 0; mm < pat.perOutcomePower.size(); ++mm)
        if (!std::isnan(pat.perOutcomePower[mm]))
          row("testing", mt.method, mt.k, grp, "power_y" + std::to_string(mm + 1),
              pat.perOutcomePower[mm]);
      row("testing", mt.method, mt.k, grp, "jointPower", pat.jointPower);
    }
  }
  if (m.hasComparator) {
    row("comparator", "betaDagger", 0, "null", "zeroFrac", m.comparator.nullZeroFrac);
    row("comparator", "betaDagger", 0, "nullPredictor", "elimRate",
        m.comparator.nullPredictorElimRate);
    row("comparator", "betaDagger", 0, "nonNull", "selectionRate",
        m.comparator.nonNullSelectionRate);
    row("comparator", "betaHat", 0, "nonNull", "selectionRate",
        m.comparator.jointNonNullSelectionRate);
  }
}

void write_report_tsv(const FitArtifact& a, const std::vector<TestResult>& results,
                      const std::string& ciTsvPath, std::ostream& os) {
  // Optional CI columns keyed by (predictor, outcome).
  std::map<std::pair<std::string, std::string>, std::pair<std::string, std::string>> ci;
  if (!ciTsvPath.empty()) {
    std::ifstream in(ciTsvPath);
    if (!in) throw ValidationError("cannot open ci file: " + ciTsvPath);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::vector<std::string> f;
      std::string tok;
      while (std::getline(ss, tok, '\t')) f.push_back(tok);
      if (f.size() < 9) continue;
      ci[{f[0], f[1]}] = {f[7], f[8]};  // quantile interval
    }
  }

  os << "predictor\toutcome\tbetaHat\tciLo\tciHi";
  for (const auto& r : results) {
    std::string tag = r.method + (r.k > 1 ? "_k" + std::to_string(r.k) : "");
    os << '\t' << tag << "_t\t" << tag << "_adjP\t" << tag << "_rejected";
  }
  os << '\n';
  for (int j = 0; j < a.p; ++j) {
    for (int m = 0; m < a.M; ++m) {
      os << a.predictorNames[j] << '\t' << a.outcomeNames[m] << '\t'
         << fmt(a.fit.betaHat(j, m));
      auto it = ci.find({a.predictorNames[j], a.outcomeNames[m]});
      if (it != ci.end())
        os << '\t' << it->second.first << '\t' << it->second.second;
      else
        os << "\tNA\tNA";
      for (const auto& r : results) {
        const bool rej =
            std::binary_search(r.rejected[j].begin(), r.rejected[j].end(), m);
        os << '\t' << fmt(r.tStats(j, m)) << '\t' << fmt(r.adjP(j, m)) << '\t'
           << (rej ? 1 : 0);
      }
      os << '\n';
    }
  }
}

SimConfig read_sim_config(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ValidationError("invalid simulation config JSON: " + std::string(e.what()));
  }
  SimConfig cfg;
  if (j.contains("n")) cfg.n = j["n"].get<int>();
  if (j.contains("p")) cfg.p = j["p"].get<int>();
  if (j.contains("M")) cfg.M = j["M"].get<int>();
  if (j.contains("maf")) cfg.maf = j["maf"].get<double>();
  if (j.contains("rho")) cfg.rho = j["rho"].get<double>();
  if (j.contains("levels")) cfg.levels = j["levels"].get<int>();
  if (j.contains("reps")) cfg.reps = j["reps"].get<int>();
  if (j.contains("B")) cfg.B = j["B"].get<int>();
  if (j.contains("ciB")) cfg.ciB = j["ciB"].get<int>();
  if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
  if (j.contains("psi")) cfg.psi = j["psi"].get<double>();
  if (j.contains("kList")) cfg.kList = j["kList"].get<std::vector<int>>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("doEstimation")) cfg.doEstimation = j["doEstimation"].get<bool>();
  if (j.contains("doResampleCis")) cfg.doResampleCis = j["doResampleCis"].get<bool>();
  if (j.contains("doPermutationTests"))
    cfg.doPermutationTests = j["doPermutationTests"].get<bool>();
  if (j.contains("doMarginalComparator"))
    cfg.doMarginalComparator = j["doMarginalComparator"].get<bool>();
  if (j.contains("lambdaGrid")) cfg.lambdaGrid = j["lambdaGrid"].get<std::vector<double>>();
  if (j.contains("beta0")) {
    if (j["beta0"].is_string()) {
      const std::string s = j["beta0"].get<std::string>();
      if (s == "paper")
        cfg.beta0 = paper_beta0();
      else if (s == "null")
        cfg.beta0 = CoefMatrix::Zero(cfg.p, cfg.M);
      else
        throw ValidationError("beta0 must be 'paper', 'null', or a matrix");
    } else {
      cfg.beta0 = matrix_from_json(j["beta0"]);
    }
  }
  return cfg;
}

}  // namespace smrt
