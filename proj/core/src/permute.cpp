#include "smrt/permute.hpp"

#include <cmath>
#include <numeric>

#include "smrt/parallel.hpp"
#include "smrt/rng.hpp"

namespace smrt {

namespace {

constexpr std::uint64_t kPermTag = 0x7065726d75746521ULL;

struct DrawResult {
  VectorXd sparse;   // p
  VectorXd initial;  // p
  bool failed = false;
};

// One permutation draw for outcome m; everything except the permuted column
// is reused from the caller's caches.
DrawResult permutation_draw(const Dataset& ds, const std::vector<MarginalFit>& fits,
                            const QuadraticSystem& sys, const CoefMatrix& betaTilde,
                            const VectorXd& sigmaM, double lambda, int m,
                            std::uint64_t seed, int b, int attempt) {
  const int n = ds.n();
  const int p = ds.p();
  const double sqrtN = std::sqrt(static_cast<double>(n));

  RngStream rng = attempt == 0
                      ? RngStream::derive(seed, {kPermTag, static_cast<std::uint64_t>(m),
                                                 static_cast<std::uint64_t>(b)})
                      : RngStream::derive(seed, {kPermTag, static_cast<std::uint64_t>(m),
                                                 static_cast<std::uint64_t>(b),
                                                 static_cast<std::uint64_t>(attempt)});
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  OutcomeColumn permuted = ds.outcomes[m];
  for (int i = 0; i < n; ++i) permuted.values[i] = ds.outcomes[m].values[perm[i]];

  DrawResult out;
  try {
    MarginalFit refit = fit_cumulative_logit(ds.X, permuted);
    out.initial = (sqrtN * refit.betaTilde.cwiseAbs().array() / sigmaM.array()).matrix();

    QuadraticSystem sysB = sys.withBlock(m, refit.profileInfo, refit.betaTilde);
    CoefMatrix btB = betaTilde;
    btB.col(m) = refit.betaTilde;
    PenaltySpec pen = PenaltySpec::fromBetaTilde(btB, lambda);
    SparseFit sf = fit_hierarchical(sysB, pen);
    out.sparse =
        (sqrtN * sf.betaHat.col(m).cwiseAbs().array() / sigmaM.array()).matrix();
  } catch (const NumericError&) {
    out.failed = true;
    out.sparse = VectorXd::Zero(p);
    out.initial = VectorXd::Zero(p);
  }
  return out;
}

void run_outcome(const Dataset& ds, const std::vector<MarginalFit>& fits,
                 const QuadraticSystem& sys, double lambda, int m, int B,
                 std::uint64_t seed, const PermutationOptions& opts,
                 MatrixXd* sparseOut, MatrixXd* initialOut) {
  const int p = ds.p();
  VectorXd sigmaM = fits[m].sigmaTilde;
  const CoefMatrix& betaTilde = sys.betaTilde;

  std::vector<DrawResult> results(B);
  parallel_for(opts.threads, static_cast<std::size_t>(B), [&](std::size_t b) {
    // A failed refit (separation on an unlucky shuffle) is retried with a
    // fresh derived stream so draw b stays deterministic and unbiased.
    for (int attempt = 0; attempt < 3; ++attempt) {
      results[b] = permutation_draw(ds, fits, sys, betaTilde, sigmaM, lambda, m,
                                    seed, static_cast<int>(b), attempt);
      if (!results[b].failed) break;
    }
  });

  int nFailed = 0;
  for (const auto& r : results)
    if (r.failed) ++nFailed;
  if (nFailed > opts.maxFailFraction * B)
    throw NumericError("permutation reference for outcome " + std::to_string(m) +
                       ": " + std::to_string(nFailed) + " of " +
                       std::to_string(B) + " draws failed");

  if (sparseOut) sparseOut->resize(p, B);
  if (initialOut) initialOut->resize(p, B);
  for (int b = 0; b < B; ++b) {
    if (sparseOut) sparseOut->col(b) = results[b].sparse;
    if (initialOut) initialOut->col(b) = results[b].initial;
  }
}

}  // namespace

MatrixXd permutation_reference(const Dataset& ds,
                               const std::vector<MarginalFit>& fits,
                               double lambda, int m, int B, std::uint64_t seed,
                               RefEstimator est, const PermutationOptions& opts) {
  if (m < 0 || m >= ds.M()) throw ValidationError("outcome index out of range");
  if (B < 1) throw ValidationError("reference needs B >= 1");
  if (static_cast<int>(fits.size()) != ds.M())
    throw ValidationError("need cached marginal fits for every outcome");
  QuadraticSystem sys = assemble(fits);
  MatrixXd sparse, initial;
  run_outcome(ds, fits, sys, lambda, m, B, seed, opts,
              est == RefEstimator::Sparse ? &sparse : nullptr,
              est == RefEstimator::Initial ? &initial : nullptr);
  return est == RefEstimator::Sparse ? sparse : initial;
}

ReferencePair build_reference_pair(const Dataset& ds,
                                   const std::vector<MarginalFit>& fits,
                                   double lambda, int B, std::uint64_t seed,
                                   const PermutationOptions& opts) {
  if (B < 1) throw ValidationError("reference needs B >= 1");
  if (static_cast<int>(fits.size()) != ds.M())
    throw ValidationError("need cached marginal fits for every outcome");
  const int p = ds.p();
  const int M = ds.M();
  QuadraticSystem sys = assemble(fits);

  ReferencePair pair;
  for (ReferenceDistribution* ref : {&pair.sparse, &pair.initial}) {
    ref->kind = RefKind::Permutation;
    ref->seed = seed;
    ref->B = B;
    ref->values.assign(B, MatrixXd::Zero(p, M));
  }
  for (int m = 0; m < M; ++m) {
    MatrixXd sparse, initial;
    run_outcome(ds, fits, sys, lambda, m, B, seed, opts, &sparse, &initial);
    for (int b = 0; b < B; ++b) {
      pair.sparse.values[b].col(m) = sparse.col(b);
      pair.initial.values[b].col(m) = initial.col(b);
    }
  }
  return pair;
}

ReferenceDistribution build_reference(const Dataset& ds,
                                      const std::vector<MarginalFit>& fits,
                                      double lambda, int B, std::uint64_t seed,
                                      RefEstimator est,
                                      const PermutationOptions& opts) {
  if (B < 1) throw ValidationError("reference needs B >= 1");
  if (static_cast<int>(fits.size()) != ds.M())
    throw ValidationError("need cached marginal fits for every outcome");
  const int p = ds.p();
  const int M = ds.M();
  QuadraticSystem sys = assemble(fits);

  ReferenceDistribution ref;
  ref.kind = RefKind::Permutation;
  ref.seed = seed;
  ref.B = B;
  ref.values.assign(B, MatrixXd::Zero(p, M));
  for (int m = 0; m < M; ++m) {
    MatrixXd block;
    run_outcome(ds, fits, sys, lambda, m, B, seed, opts,
                est == RefEstimator::Sparse ? &block : nullptr,
                est == RefEstimator::Initial ? &block : nullptr);
    for (int b = 0; b < B; ++b) ref.values[b].col(m) = block.col(b);
  }
  return ref;
}

ReferenceDistribution resampling_reference(const PerturbDraws& draws,
                                           const CoefMatrix& center,
                                           const MatrixXd& sigmaTilde,
                                           RefEstimator est) {
  if (draws.B < 1) throw ValidationError("resampling reference needs draws");
  const auto& source =
      est == RefEstimator::Sparse ? draws.betaHatStar : draws.betaTildeStar;
  const double sqrtN = std::sqrt(static_cast<double>(draws.n));

  ReferenceDistribution ref;
  ref.kind = RefKind::Resampling;
  ref.seed = draws.seed;
  ref.values.reserve(draws.B);
  std::vector<char> failed(draws.B, 0);
  for (int b : draws.failedDraws) failed[b] = 1;
  for (int b = 0; b < draws.B; ++b) {
    if (failed[b]) continue;  // failed draws carry no reference value
    ref.values.push_back(
        (sqrtN * (source[b] - center).cwiseAbs().array() / sigmaTilde.array())
            .matrix());
  }
  ref.B = static_cast<int>(ref.values.size());
  return ref;
}

}  // namespace smrt
