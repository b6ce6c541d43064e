#include "smrt/stepdown.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace smrt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ceil((B+1) psi) with a guard against floating fuzz on exact integers.
int cutoff_index(int B, double psi) {
  return static_cast<int>(std::ceil((B + 1) * psi - 1e-9));
}

// Hypothesis ranks: descending statistic, ties by ascending hypothesis index.
std::vector<int> rank_order(const VectorXd& t) {
  std::vector<int> r(t.size());
  std::iota(r.begin(), r.end(), 0);
  std::stable_sort(r.begin(), r.end(), [&](int a, int b) { return t[a] > t[b]; });
  return r;
}

// Stepdown engine over a fixed rank order: for every suffix Omega_l =
// {ranks[l..]}, the sorted per-draw maxima of the reference, from which any
// psi-cutoff is an order-statistic lookup.
class SuffixCutoffs {
 public:
  // ref is H x B in hypothesis (not rank) order.
  SuffixCutoffs(const MatrixXd& ref, const std::vector<int>& ranks) {
    const int H = static_cast<int>(ranks.size());
    B_ = static_cast<int>(ref.cols());
    sorted_.assign(H, std::vector<double>(B_));
    std::vector<double> running(B_, -kInf);
    for (int l = H - 1; l >= 0; --l) {
      const int h = ranks[l];
      for (int b = 0; b < B_; ++b)
        running[b] = std::max(running[b], ref(h, b));
      sorted_[l] = running;
      std::sort(sorted_[l].begin(), sorted_[l].end());
    }
  }

  double cutoff(int l, double psi) const {
    const int idx = cutoff_index(B_, psi);
    if (idx > B_) return kInf;
    return sorted_[l][idx - 1];
  }

  int B() const { return B_; }

 private:
  int B_ = 0;
  std::vector<std::vector<double>> sorted_;
};

// The stepdown walk shared by every variant: test suffixes in rank order,
// a first success rejects ranks[0..k-1] jointly, later successes reject one
// hypothesis each.
std::vector<int> stepdown_walk(const VectorXd& t, const std::vector<int>& ranks,
                               const SuffixCutoffs& cuts, double psi, int k) {
  const int H = static_cast<int>(ranks.size());
  std::vector<int> rejected;
  bool first = true;
  for (int pos = k - 1; pos < H; ++pos) {
    const double s = t[ranks[pos]];  // max over the suffix = first remaining rank
    if (!(s > cuts.cutoff(pos, psi))) break;
    if (first) {
      for (int l = 0; l <= pos; ++l) rejected.push_back(ranks[l]);
      first = false;
    } else {
      rejected.push_back(ranks[pos]);
    }
  }
  std::sort(rejected.begin(), rejected.end());
  return rejected;
}

}  // namespace

MatrixXd test_stats(const CoefMatrix& betaHat, const MatrixXd& sigmaTilde, int n) {
  if (betaHat.rows() != sigmaTilde.rows() || betaHat.cols() != sigmaTilde.cols())
    throw ValidationError("test_stats: shape mismatch");
  if ((sigmaTilde.array() <= 0.0).any())
    throw ValidationError("test_stats: sigmaTilde must be positive");
  return (std::sqrt(static_cast<double>(n)) * betaHat.cwiseAbs().array() /
          sigmaTilde.array())
      .matrix();
}

MatrixXd reference_row(const ReferenceDistribution& ref, int j) {
  if (j < 0 || j >= ref.p()) throw ValidationError("predictor index out of range");
  MatrixXd row(ref.M(), ref.B);
  for (int b = 0; b < ref.B; ++b) row.col(b) = ref.values[b].row(j).transpose();
  return row;
}

double sup_quantile(const ReferenceDistribution& ref, int j,
                    const std::vector<int>& omega, double psi) {
  if (ref.B < 1) throw ValidationError("sup_quantile: empty reference");
  if (omega.empty()) throw ValidationError("sup_quantile: empty index set");
  if (!(psi > 0.0 && psi < 1.0)) throw ValidationError("sup_quantile: psi outside (0,1)");
  const int idx = cutoff_index(ref.B, psi);
  if (idx > ref.B) return kInf;
  std::vector<double> maxima(ref.B);
  for (int b = 0; b < ref.B; ++b) {
    double mx = -kInf;
    for (int m : omega) {
      if (m < 0 || m >= ref.M()) throw ValidationError("sup_quantile: index out of range");
      mx = std::max(mx, ref.values[b](j, m));
    }
    maxima[b] = mx;
  }
  std::nth_element(maxima.begin(), maxima.begin() + (idx - 1), maxima.end());
  return maxima[idx - 1];
}

std::vector<int> stepdown_single(const VectorXd& tRow, const MatrixXd& refRow,
                                 double psi, int k) {
  const int M = static_cast<int>(tRow.size());
  if (refRow.rows() != M) throw ValidationError("stepdown_single: reference shape mismatch");
  if (k < 1 || k > M) throw ValidationError("stepdown_single: k outside 1..M");
  if (!(psi > 0.0 && psi < 1.0)) throw ValidationError("stepdown_single: psi outside (0,1)");
  std::vector<int> ranks = rank_order(tRow);
  SuffixCutoffs cuts(refRow, ranks);
  return stepdown_walk(tRow, ranks, cuts, psi, k);
}

VectorXd adjusted_pvalues(const VectorXd& tRow, const MatrixXd& refRow, int k) {
  const int M = static_cast<int>(tRow.size());
  const int B = static_cast<int>(refRow.cols());
  if (B < 1) throw ValidationError("adjusted_pvalues: empty reference");
  if (k < 1 || k > M) throw ValidationError("adjusted_pvalues: k outside 1..M");

  std::vector<int> ranks = rank_order(tRow);
  SuffixCutoffs cuts(refRow, ranks);

  VectorXd adj = VectorXd::Ones(M);
  std::vector<char> set(M, 0);
  for (int i = 0; i < B; ++i) {  // alpha grid (1+i)/(B+1), ascending
    const double alpha = static_cast<double>(1 + i) / (B + 1);
    const double psi = 1.0 - alpha;
    std::vector<int> rej = stepdown_walk(tRow, ranks, cuts, psi, k);
    for (int m : rej) {
      if (!set[m]) {
        adj[m] = alpha;
        set[m] = 1;
      }
    }
  }
  // Non-decreasing along the rejection order.
  double run = 0.0;
  for (int m : ranks) {
    run = std::max(run, adj[m]);
    adj[m] = run;
  }
  return adj;
}

TestResult smrt_test(const MatrixXd& t, const ReferenceDistribution& ref,
                     double psi, int k, bool withAdjP) {
  const int p = static_cast<int>(t.rows());
  const int M = static_cast<int>(t.cols());
  if (ref.p() != p || ref.M() != M)
    throw ValidationError("reference does not match statistic shape");

  TestResult res;
  res.method = "SMRT";
  res.k = k;
  res.psi = psi;
  res.refKind = ref.kind;
  res.tStats = t;
  res.adjP = MatrixXd::Constant(p, M, kNaN);
  res.rejected.resize(p);
  for (int j = 0; j < p; ++j) {
    MatrixXd row = reference_row(ref, j);
    VectorXd tRow = t.row(j).transpose();
    res.rejected[j] = stepdown_single(tRow, row, psi, k);
    if (withAdjP) res.adjP.row(j) = adjusted_pvalues(tRow, row, k).transpose();
  }
  return res;
}

TestResult stepdown_all(const MatrixXd& t, const ReferenceDistribution& ref,
                        double psi, int k, AllPredictorMode mode) {
  const int p = static_cast<int>(t.rows());
  const int M = static_cast<int>(t.cols());
  if (ref.p() != p || ref.M() != M)
    throw ValidationError("reference does not match statistic shape");
  if (k < 1 || k > M) throw ValidationError("stepdown_all: k outside 1..M");

  TestResult res;
  res.method = "SMRT";
  res.k = k;
  res.psi = psi;
  res.refKind = ref.kind;
  res.tStats = t;
  res.adjP = MatrixXd::Constant(p, M, kNaN);
  res.rejected.assign(p, {});

  if (mode == AllPredictorMode::PerPredictorAlphaOverP) {
    const double psiAdj = 1.0 - (1.0 - psi) / p;
    for (int j = 0; j < p; ++j) {
      MatrixXd row = reference_row(ref, j);
      res.rejected[j] = stepdown_single(t.row(j).transpose(), row, psiAdj, k);
    }
    return res;
  }

  // Joint mode: pool all (j, m) pairs; with k > 1 each predictor's k-1
  // largest statistics are held out of the pooled stepdown and rejected by
  // implication when any of that predictor's remaining hypotheses falls.
  std::vector<std::pair<int, int>> heldOut;  // (j, m)
  std::vector<char> keep(static_cast<std::size_t>(p) * M, 1);
  if (k > 1) {
    for (int j = 0; j < p; ++j) {
      VectorXd tRow = t.row(j).transpose();
      std::vector<int> ranks = rank_order(tRow);
      for (int l = 0; l < k - 1; ++l) {
        heldOut.emplace_back(j, ranks[l]);
        keep[static_cast<std::size_t>(j) * M + ranks[l]] = 0;
      }
    }
  }

  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < p; ++j)
    for (int m = 0; m < M; ++m)
      if (keep[static_cast<std::size_t>(j) * M + m]) pairs.emplace_back(j, m);

  const int H = static_cast<int>(pairs.size());
  VectorXd tFlat(H);
  MatrixXd refFlat(H, ref.B);
  for (int h = 0; h < H; ++h) {
    tFlat[h] = t(pairs[h].first, pairs[h].second);
    for (int b = 0; b < ref.B; ++b)
      refFlat(h, b) = ref.values[b](pairs[h].first, pairs[h].second);
  }
  std::vector<int> ranks = rank_order(tFlat);
  SuffixCutoffs cuts(refFlat, ranks);
  std::vector<int> rej = stepdown_walk(tFlat, ranks, cuts, psi, 1);

  for (int h : rej) res.rejected[pairs[h].first].push_back(pairs[h].second);
  if (k > 1) {
    for (const auto& [j, m] : heldOut)
      if (!res.rejected[j].empty()) res.rejected[j].push_back(m);
  }
  for (auto& r : res.rejected) std::sort(r.begin(), r.end());
  return res;
}

TestResult sup_test(const MatrixXd& t, const ReferenceDistribution& ref,
                    double alpha) {
  const int p = static_cast<int>(t.rows());
  const int M = static_cast<int>(t.cols());
  if (ref.p() != p || ref.M() != M)
    throw ValidationError("reference does not match statistic shape");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha outside (0,1)");

  TestResult res;
  res.method = "Sup";
  res.k = 1;
  res.psi = 1.0 - alpha;
  res.refKind = ref.kind;
  res.tStats = t;
  res.adjP = MatrixXd::Constant(p, M, kNaN);
  res.rejected.resize(p);
  std::vector<int> omega(M);
  std::iota(omega.begin(), omega.end(), 0);
  for (int j = 0; j < p; ++j) {
    const double c = sup_quantile(ref, j, omega, res.psi);
    for (int m = 0; m < M; ++m)
      if (t(j, m) > c) res.rejected[j].push_back(m);
  }
  return res;
}

TestResult bonferroni_test(const MatrixXd& t, const ReferenceDistribution& ref,
                           double alpha, bool allPredictors) {
  const int p = static_cast<int>(t.rows());
  const int M = static_cast<int>(t.cols());
  if (ref.p() != p || ref.M() != M)
    throw ValidationError("reference does not match statistic shape");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha outside (0,1)");

  TestResult res;
  res.method = "Bonferroni";
  res.k = 1;
  res.psi = 1.0 - alpha;
  res.refKind = ref.kind;
  res.tStats = t;
  res.adjP = MatrixXd::Zero(p, M);
  res.rejected.resize(p);
  const double cut = allPredictors ? alpha / (static_cast<double>(p) * M) : alpha / M;
  for (int j = 0; j < p; ++j) {
    for (int m = 0; m < M; ++m) {
      int exceed = 0;
      for (int b = 0; b < ref.B; ++b)
        if (ref.values[b](j, m) >= t(j, m)) ++exceed;
      const double pval = static_cast<double>(1 + exceed) / (ref.B + 1);
      res.adjP(j, m) = std::min(1.0, pval * (allPredictors ? p * M : M));
      if (pval < cut) res.rejected[j].push_back(m);
    }
  }
  return res;
}

TestResult mrt_test(const MatrixXd& tInitial, const ReferenceDistribution& refInitial,
                    double psi, int k, bool withAdjP) {
  TestResult res = smrt_test(tInitial, refInitial, psi, k, withAdjP);
  res.method = "MRT";
  return res;
}

}  // namespace smrt
