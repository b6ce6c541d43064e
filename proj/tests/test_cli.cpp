#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

#include "smrt/dataset.hpp"
#include "smrt/simulate.hpp"

using namespace smrt;
namespace fs = std::filesystem;

#ifdef SMRT_CLI_PATH

namespace {

struct CliFixture {
  fs::path dir;
  CliFixture() {
    dir = fs::temp_directory_path() /
          ("smrt_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir);
    // A small but testable dataset written through the library.
    SimConfig cfg;
    cfg.n = 120;
    cfg.p = 4;
    cfg.M = 2;
    cfg.levels = 4;
    cfg.beta0 = CoefMatrix::Zero(4, 2);
    cfg.beta0(0, 0) = 1.2;
    cfg.beta0(0, 1) = 1.0;
    cfg.beta0(1, 0) = 1.0;
    RngStream r = RngStream::derive(2024, {1});
    Dataset ds = generate(cfg, r);
    save_dataset(ds, (dir / "d.tsv").string(), (dir / "m.json").string());
  }
  ~CliFixture() { fs::remove_all(dir); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(SMRT_CLI_PATH) + " " + args +
                            " >" + (dir / "stdout.txt").string() + " 2>" +
                            (dir / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
  }

  std::string slurp(const fs::path& p) const {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  static inline int counter = 0;
};

}  // namespace

TEST_CASE("fit happy path writes fit.json, ci.tsv and honors --lambda auto") {
  CliFixture fx;
  const std::string base = "--data " + (fx.dir / "d.tsv").string() + " --meta " +
                           (fx.dir / "m.json").string();
  CHECK(fx.run("fit " + base + " --lambda auto --seed 7 --out " +
               (fx.dir / "o1").string()) == 0);
  CHECK(fs::exists(fx.dir / "o1" / "fit.json"));
  CHECK(fs::exists(fx.dir / "o1" / "ci.tsv"));
  const std::string fit = fx.slurp(fx.dir / "o1" / "fit.json");
  CHECK(fit.find("\"lambda\"") != std::string::npos);
  CHECK(fit.find("\"bic\"") != std::string::npos);
}

TEST_CASE("missing metadata file exits with code 2") {
  CliFixture fx;
  CHECK(fx.run("fit --data " + (fx.dir / "d.tsv").string() + " --meta " +
               (fx.dir / "nope.json").string()) == 2);
}

TEST_CASE("fixed seed reruns are byte-identical") {
  CliFixture fx;
  const std::string base = "--data " + (fx.dir / "d.tsv").string() + " --meta " +
                           (fx.dir / "m.json").string() +
                           " --lambda auto --resample 24 --seed 7";
  REQUIRE(fx.run("fit " + base + " --out " + (fx.dir / "a").string()) == 0);
  REQUIRE(fx.run("fit " + base + " --out " + (fx.dir / "b").string()) == 0);
  CHECK(fx.slurp(fx.dir / "a" / "fit.json") == fx.slurp(fx.dir / "b" / "fit.json"));
  CHECK(fx.slurp(fx.dir / "a" / "draws.jsonl") == fx.slurp(fx.dir / "b" / "draws.jsonl"));
  CHECK(fx.slurp(fx.dir / "a" / "ci.tsv") == fx.slurp(fx.dir / "b" / "ci.tsv"));
}

TEST_CASE("test command: k-cardinality in the TSV, seed determinism, report join") {
  CliFixture fx;
  const std::string base = "--data " + (fx.dir / "d.tsv").string() + " --meta " +
                           (fx.dir / "m.json").string();
  REQUIRE(fx.run("fit " + base + " --lambda auto --resample 30 --seed 3 --out " +
                 (fx.dir / "f").string()) == 0);
  const std::string testBase =
      "test " + base + " --fit " + (fx.dir / "f" / "fit.json").string() +
      " --B 30 --k 2 --alpha 0.1 --method sup --method bonferroni --seed 11";
  REQUIRE(fx.run(testBase + " --out " + (fx.dir / "t1").string()) == 0);
  REQUIRE(fx.run(testBase + " --out " + (fx.dir / "t2").string()) == 0);
  CHECK(fx.slurp(fx.dir / "t1" / "test.tsv") == fx.slurp(fx.dir / "t2" / "test.tsv"));

  // k = 2: every predictor rejects 0 or >= 2 outcomes in the SMRT rows.
  std::istringstream tsv(fx.slurp(fx.dir / "t1" / "test.tsv"));
  std::string line;
  std::getline(tsv, line);  // header
  std::map<std::string, int> rejCount;
  while (std::getline(tsv, line)) {
    std::istringstream ls(line);
    std::vector<std::string> f;
    std::string tok;
    while (std::getline(ls, tok, '\t')) f.push_back(tok);
    REQUIRE(f.size() == 7);
    if (f[0] == "SMRT" && f[6] == "1") ++rejCount[f[2]];
  }
  for (const auto& [pred, cnt] : rejCount) CHECK(cnt >= 2);

  // Report joins fit + test (+ci) into one table.
  REQUIRE(fx.run("report --fit " + (fx.dir / "f" / "fit.json").string() +
                 " --test " + (fx.dir / "t1" / "test.json").string() + " --ci " +
                 (fx.dir / "f" / "ci.tsv").string() + " --out " +
                 (fx.dir / "rep").string()) == 0);
  const std::string rep = fx.slurp(fx.dir / "rep" / "report.tsv");
  CHECK(rep.find("SMRT_k2_adjP") != std::string::npos);
  CHECK(rep.find("x1\t") != std::string::npos);
}

TEST_CASE("resampling reference via stored draws") {
  CliFixture fx;
  const std::string base = "--data " + (fx.dir / "d.tsv").string() + " --meta " +
                           (fx.dir / "m.json").string();
  REQUIRE(fx.run("fit " + base + " --lambda auto --resample 40 --seed 5 --out " +
                 (fx.dir / "f").string()) == 0);
  CHECK(fx.run("test " + base + " --fit " + (fx.dir / "f" / "fit.json").string() +
               " --ref resampling --draws " + (fx.dir / "f" / "draws.jsonl").string() +
               " --k 1 --alpha 0.1 --out " + (fx.dir / "tr").string()) == 0);
  CHECK(fs::exists(fx.dir / "tr" / "test.tsv"));
}

TEST_CASE("simulate: happy path, reps=0 guard, thread determinism") {
  CliFixture fx;
  {
    std::ofstream cfg(fx.dir / "sim.json");
    cfg << R"({"n":100,"p":3,"M":2,"levels":4,"reps":3,"B":8,"seed":9,
               "beta0":[[1.0,0.5],[0,0],[0,0]],
               "doPermutationTests":true})";
  }
  REQUIRE(fx.run("simulate --config " + (fx.dir / "sim.json").string() +
                 " --threads 1 --out " + (fx.dir / "s1").string()) == 0);
  REQUIRE(fx.run("simulate --config " + (fx.dir / "sim.json").string() +
                 " --threads 2 --out " + (fx.dir / "s2").string()) == 0);
  CHECK(fx.slurp(fx.dir / "s1" / "metrics.json") ==
        fx.slurp(fx.dir / "s2" / "metrics.json"));
  const std::string tsv = fx.slurp(fx.dir / "s1" / "metrics.tsv");
  CHECK(tsv.find("fwer") != std::string::npos);

  {
    std::ofstream cfg(fx.dir / "bad.json");
    cfg << R"({"n":100,"p":3,"M":2,"reps":0,"beta0":"null"})";
  }
  CHECK(fx.run("simulate --config " + (fx.dir / "bad.json").string()) == 2);
}

#endif  // SMRT_CLI_PATH
