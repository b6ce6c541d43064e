#include "smrt/quadratic.hpp"

namespace smrt {

QuadraticSystem assemble(const std::vector<MarginalFit>& fits) {
  if (fits.empty()) throw ValidationError("assemble needs at least one marginal fit");
  const int p = static_cast<int>(fits[0].betaTilde.size());
  const int M = static_cast<int>(fits.size());

  QuadraticSystem sys;
  sys.n = static_cast<int>(fits[0].scores.rows());
  sys.betaTilde.resize(p, M);
  sys.halves.reserve(M);
  sys.infos.reserve(M);
  sys.responses.reserve(M);
  for (int m = 0; m < M; ++m) {
    const MarginalFit& f = fits[m];
    if (f.betaTilde.size() != p || f.profileInfo.rows() != p)
      throw ValidationError("marginal fits disagree on predictor count");
    MatrixXd half = half_matrix(f.profileInfo);
    sys.responses.push_back(half * f.betaTilde);
    sys.halves.push_back(std::move(half));
    sys.infos.push_back(f.profileInfo);
    sys.betaTilde.col(m) = f.betaTilde;
  }
  return sys;
}

QuadraticSystem QuadraticSystem::withBlock(int m, const MatrixXd& info,
                                           const VectorXd& betaTildeM) const {
  if (m < 0 || m >= M()) throw ValidationError("block index out of range");
  QuadraticSystem out = *this;
  out.halves[m] = half_matrix(info);
  out.infos[m] = info;
  out.responses[m] = out.halves[m] * betaTildeM;
  out.betaTilde.col(m) = betaTildeM;
  return out;
}

double quad_loss(const QuadraticSystem& sys, const CoefMatrix& beta) {
  if (beta.rows() != sys.p() || beta.cols() != sys.M())
    throw ValidationError("coefficient matrix has wrong shape");
  double loss = 0.0;
  for (int m = 0; m < sys.M(); ++m)
    loss += (sys.halves[m] * (sys.betaTilde.col(m) - beta.col(m))).squaredNorm();
  return loss;
}

}  // namespace smrt
