// Command line front end: simulate / fit / test / report.
//
// Exit codes: 0 success, 2 input or validation failure, 3 numerical failure.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smrt/dataset.hpp"
#include "smrt/serialize.hpp"

namespace fs = std::filesystem;
using namespace smrt;

namespace {

std::uint64_t resolve_seed(std::optional<std::uint64_t> cli) {
  if (cli) return *cli;
  if (const char* env = std::getenv("SMRT_SEED")) return std::strtoull(env, nullptr, 10);
  return 20130927;  // fixed default so reruns are reproducible
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  return os;
}

struct FitInputs {
  Dataset ds;
  std::vector<MarginalFit> fits;
  QuadraticSystem sys;
};

FitInputs prepare(const std::string& dataPath, const std::string& metaPath) {
  FitInputs in;
  in.ds = load_dataset(dataPath, metaPath);
  for (int m = 0; m < in.ds.M(); ++m) in.fits.push_back(fit_marginal(in.ds, m));
  in.sys = assemble(in.fits);
  return in;
}

int cmd_fit(const std::string& dataPath, const std::string& metaPath,
            const std::string& lambdaSpec, int resampleB, double ciLevel,
            std::uint64_t seed, int threads, const std::string& gdist,
            const fs::path& outDir) {
  FitInputs in = prepare(dataPath, metaPath);

  SparseFit sf;
  if (lambdaSpec == "auto") {
    sf = tune_bic(in.sys);
  } else {
    double lam = 0.0;
    try {
      lam = std::stod(lambdaSpec);
    } catch (const std::exception&) {
      throw ValidationError("--lambda expects 'auto' or a number");
    }
    if (lam < 0) throw ValidationError("--lambda must be nonnegative");
    PenaltySpec pen = PenaltySpec::fromBetaTilde(in.sys.betaTilde, lam);
    sf = fit_hierarchical(in.sys, pen);
    sf.bic = (quad_loss(in.sys, sf.betaHat) + bic_multiplier(in.sys.n) * sf.df) /
             in.sys.n;
  }

  FitArtifact art = make_fit_artifact(in.ds, in.fits, sf, seed);
  fs::create_directories(outDir);
  {
    auto os = open_out(outDir / "fit.json");
    write_fit_json(art, os);
  }

  std::optional<CiMatrix> ciNormal, ciQuantile;
  if (resampleB > 0) {
    PerturbOptions opts;
    opts.threads = threads;
    opts.law = gdist == "ones" ? PerturbLaw::Ones : PerturbLaw::Exponential;
    PerturbDraws draws = perturb_fit(in.sys, in.fits, resampleB, seed, sf.lambda, opts);
    {
      auto os = open_out(outDir / "draws.jsonl");
      write_draws_jsonl(draws, os);
    }
    ciNormal = confidence_intervals(draws, sf.betaHat, ciLevel, CiMethod::Normal);
    if (resampleB >= 20)
      ciQuantile = confidence_intervals(draws, sf.betaHat, ciLevel, CiMethod::Quantile);
  }
  {
    auto os = open_out(outDir / "ci.tsv");
    write_ci_tsv(art, ciNormal ? &*ciNormal : nullptr,
                 ciQuantile ? &*ciQuantile : nullptr, ciLevel, os);
  }
  std::cout << "fit: lambda=" << sf.lambda << " df=" << sf.df << " bic=" << sf.bic
            << " -> " << (outDir / "fit.json").string() << "\n";
  return 0;
}

int cmd_test(const std::string& dataPath, const std::string& metaPath,
             const std::string& fitPath, const std::string& drawsPath,
             const std::string& refName, int B, int k, double alpha, double psiOpt,
             const std::vector<std::string>& extraMethods, bool allPredictors,
             std::uint64_t seed, int threads, const fs::path& outDir) {
  std::ifstream fitIn(fitPath);
  if (!fitIn) throw ValidationError("cannot open fit file: " + fitPath);
  FitArtifact art = read_fit_json(fitIn);

  FitInputs in = prepare(dataPath, metaPath);
  if (in.ds.p() != art.p || in.ds.M() != art.M)
    throw ValidationError("fit artifact does not match the dataset shape");
  if ((in.sys.betaTilde - art.betaTilde).cwiseAbs().maxCoeff() > 1e-6)
    throw ValidationError("fit artifact was produced from different data");

  const double psi = psiOpt > 0 ? psiOpt : 1.0 - alpha;
  MatrixXd t = test_stats(art.fit.betaHat, art.sigmaTilde, art.n);
  MatrixXd tInit = test_stats(art.betaTilde, art.sigmaTilde, art.n);

  const bool wantMrt = std::find(extraMethods.begin(), extraMethods.end(), "mrt") !=
                       extraMethods.end();
  ReferenceDistribution refSparse, refInitial;
  if (refName == "permutation") {
    PermutationOptions opts;
    opts.threads = threads;
    if (wantMrt) {
      ReferencePair pair = build_reference_pair(in.ds, in.fits, art.fit.lambda, B, seed, opts);
      refSparse = std::move(pair.sparse);
      refInitial = std::move(pair.initial);
    } else {
      refSparse = build_reference(in.ds, in.fits, art.fit.lambda, B, seed,
                                  RefEstimator::Sparse, opts);
    }
  } else if (refName == "resampling") {
    PerturbDraws draws;
    if (!drawsPath.empty()) {
      std::ifstream ds(drawsPath);
      if (!ds) throw ValidationError("cannot open draws file: " + drawsPath);
      draws = read_draws_jsonl(ds);
    } else {
      PerturbOptions opts;
      opts.threads = threads;
      draws = perturb_fit(in.sys, in.fits, B, seed, art.fit.lambda, opts);
    }
    refSparse = resampling_reference(draws, art.fit.betaHat, art.sigmaTilde,
                                     RefEstimator::Sparse);
    if (wantMrt)
      refInitial = resampling_reference(draws, art.betaTilde, art.sigmaTilde,
                                        RefEstimator::Initial);
  } else {
    throw ValidationError("--ref expects 'permutation' or 'resampling'");
  }

  std::vector<TestResult> results;
  if (allPredictors)
    results.push_back(stepdown_all(t, refSparse, psi, k));
  else
    results.push_back(smrt_test(t, refSparse, psi, k));
  for (const std::string& m : extraMethods) {
    if (m == "mrt")
      results.push_back(mrt_test(tInit, refInitial, psi, k));
    else if (m == "sup")
      results.push_back(sup_test(t, refSparse, alpha));
    else if (m == "bonferroni")
      results.push_back(bonferroni_test(t, refSparse, alpha, allPredictors));
    else
      throw ValidationError("unknown method '" + m + "'");
  }

  fs::create_directories(outDir);
  {
    auto os = open_out(outDir / "test.json");
    write_test_json(results, art.predictorNames, art.outcomeNames, os);
  }
  {
    auto os = open_out(outDir / "test.tsv");
    write_test_tsv(results, art.predictorNames, art.outcomeNames, os);
  }
  int totalRej = 0;
  for (const auto& r : results[0].rejected) totalRej += static_cast<int>(r.size());
  std::cout << "test: method=" << results[0].method << " k=" << k
            << " rejections=" << totalRej << " -> " << (outDir / "test.tsv").string()
            << "\n";
  return 0;
}

int cmd_simulate(const std::string& configPath, std::optional<std::uint64_t> seed,
                 std::optional<int> threads, const fs::path& outDir) {
  std::ifstream cfgIn(configPath);
  if (!cfgIn) throw ValidationError("cannot open config file: " + configPath);
  SimConfig cfg = read_sim_config(cfgIn);
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  cfg.validate();

  ExperimentMetrics m = run_experiment(cfg);
  fs::create_directories(outDir);
  {
    auto os = open_out(outDir / "metrics.json");
    write_metrics_json(m, os);
  }
  {
    auto os = open_out(outDir / "metrics.tsv");
    write_metrics_tsv(m, os);
  }
  std::cout << "simulate: reps=" << cfg.reps << " n=" << cfg.n << " -> "
            << (outDir / "metrics.json").string() << "\n";
  return 0;
}

int cmd_report(const std::string& fitPath, const std::string& testPath,
               const std::string& ciPath, const fs::path& outDir) {
  std::ifstream fitIn(fitPath);
  if (!fitIn) throw ValidationError("cannot open fit file: " + fitPath);
  FitArtifact art = read_fit_json(fitIn);

  std::ifstream testIn(testPath);
  if (!testIn) throw ValidationError("cannot open test file: " + testPath);
  // Reparse the test artifact into TestResult rows.
  std::vector<TestResult> results;
  {
    nlohmann::json j;
    try {
      testIn >> j;
    } catch (const std::exception& e) {
      throw ValidationError("invalid test JSON: " + std::string(e.what()));
    }
    for (const auto& rj : j.at("results")) {
      TestResult r;
      r.method = rj.at("method").get<std::string>();
      r.k = rj.at("k").get<int>();
      r.psi = rj.at("psi").get<double>();
      r.refKind = rj.at("refKind").get<std::string>() == "resampling"
                      ? RefKind::Resampling
                      : RefKind::Permutation;
      const auto& tj = rj.at("tStats");
      const int p = static_cast<int>(tj.size());
      const int M = p ? static_cast<int>(tj[0].size()) : 0;
      r.tStats.resize(p, M);
      r.adjP.resize(p, M);
      for (int jj = 0; jj < p; ++jj)
        for (int mm = 0; mm < M; ++mm) {
          r.tStats(jj, mm) = tj[jj][mm].get<double>();
          const auto& aj = rj.at("adjP")[jj][mm];
          r.adjP(jj, mm) = aj.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                        : aj.get<double>();
        }
      r.rejected = rj.at("rejected").get<std::vector<std::vector<int>>>();
      results.push_back(std::move(r));
    }
  }

  fs::create_directories(outDir);
  auto os = open_out(outDir / "report.tsv");
  write_report_tsv(art, results, ciPath, os);
  std::cout << "report -> " << (outDir / "report.tsv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse multiple-regulation estimation and testing"};
  app.require_subcommand(1);

  std::string dataPath, metaPath, fitPath, drawsPath, testPath, ciPath, configPath;
  std::string lambdaSpec = "auto";
  std::string refName = "permutation";
  std::string gdist = "exponential";
  std::string outDir = ".";
  int resampleB = 0, B = 200, k = 1;
  double alpha = 0.05, psi = -1, ciLevel = 0.95;
  bool allPredictors = false;
  std::vector<std::string> extraMethods;
  std::optional<std::uint64_t> seedOpt;
  std::optional<int> threadsOpt;

  auto* fit = app.add_subcommand("fit", "fit the joint sparse model");
  fit->add_option("--data", dataPath, "data file (CSV/TSV with header)")->required();
  fit->add_option("--meta", metaPath, "outcome metadata JSON")->required();
  fit->add_option("--lambda", lambdaSpec, "'auto' (BIC) or a fixed value");
  fit->add_option("--resample", resampleB, "perturbation draws for SEs/CIs");
  fit->add_option("--ci-level", ciLevel, "confidence level");
  fit->add_option("--gdist", gdist, "perturbation law: exponential|ones");
  fit->add_option("--seed", seedOpt, "RNG seed (or SMRT_SEED env)");
  fit->add_option("--threads", threadsOpt, "worker threads (0 = auto)");
  fit->add_option("--out", outDir, "output directory");

  auto* test = app.add_subcommand("test", "stepdown multiple-regulation tests");
  test->add_option("--data", dataPath, "data file")->required();
  test->add_option("--meta", metaPath, "outcome metadata JSON")->required();
  test->add_option("--fit", fitPath, "fit.json from the fit command")->required();
  test->add_option("--draws", drawsPath, "draws.jsonl (resampling reference)");
  test->add_option("--ref", refName, "reference: permutation|resampling");
  test->add_option("--B", B, "reference draws");
  test->add_option("--k", k, "regulation threshold (reject 0 or >= k)");
  test->add_option("--alpha", alpha, "familywise level");
  test->add_option("--psi", psi, "cutoff quantile (default 1 - alpha)");
  test->add_option("--method", extraMethods, "comparators: mrt, sup, bonferroni");
  test->add_flag("--all-predictors", allPredictors, "control FWER across all predictors");
  test->add_option("--seed", seedOpt, "RNG seed (or SMRT_SEED env)");
  test->add_option("--threads", threadsOpt, "worker threads (0 = auto)");
  test->add_option("--out", outDir, "output directory");

  auto* sim = app.add_subcommand("simulate", "run a synthetic experiment");
  sim->add_option("--config", configPath, "simulation config JSON")->required();
  sim->add_option("--seed", seedOpt, "override config seed");
  sim->add_option("--threads", threadsOpt, "override config threads");
  sim->add_option("--out", outDir, "output directory");

  auto* rep = app.add_subcommand("report", "combine fit + test artifacts into a TSV");
  rep->add_option("--fit", fitPath, "fit.json")->required();
  rep->add_option("--test", testPath, "test.json")->required();
  rep->add_option("--ci", ciPath, "ci.tsv for interval columns");
  rep->add_option("--out", outDir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    const std::uint64_t seed = resolve_seed(seedOpt);
    const int threads = threadsOpt.value_or(0);
    if (fit->parsed())
      return cmd_fit(dataPath, metaPath, lambdaSpec, resampleB, ciLevel, seed,
                     threads, gdist, outDir);
    if (test->parsed())
      return cmd_test(dataPath, metaPath, fitPath, drawsPath, refName, B, k, alpha,
                      psi, extraMethods, allPredictors, seed, threads, outDir);
    if (sim->parsed()) return cmd_simulate(configPath, seedOpt, threadsOpt, outDir);
    if (rep->parsed()) return cmd_report(fitPath, testPath, ciPath, outDir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
