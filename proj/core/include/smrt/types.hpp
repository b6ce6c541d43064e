#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "smrt/errors.hpp"

namespace smrt {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

// p x M coefficient matrix; column m holds beta^(m), entry (j, m) is the
// effect of predictor j on outcome m.
using CoefMatrix = Eigen::MatrixXd;

enum class OutcomeKind { Binary, Ordinal };

// One outcome column after discretization: values are level indices in
// {0, ..., levels-1}, increasing in the underlying outcome.
struct OutcomeColumn {
  OutcomeKind kind = OutcomeKind::Ordinal;
  int levels = 2;
  VectorXi values;
};

struct Dataset {
  MatrixXd X;  // n x p predictors
  std::vector<OutcomeColumn> outcomes;
  std::vector<std::string> predictorNames;
  std::vector<std::string> outcomeNames;

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }
  int M() const { return static_cast<int>(outcomes.size()); }

  // Throws ValidationError on any invariant violation: non-finite
  // predictors, unoccupied levels, binary with L != 2, or n <= p + max L.
  void validate() const;
};

// Coordinates (j, m) of nonzero coefficients, 0-based.
struct ActiveSet {
  std::vector<std::pair<int, int>> indices;

  static ActiveSet fromMatrix(const CoefMatrix& beta) {
    ActiveSet a;
    for (int m = 0; m < beta.cols(); ++m)
      for (int j = 0; j < beta.rows(); ++j)
        if (beta(j, m) != 0.0) a.indices.emplace_back(j, m);
    return a;
  }

  bool contains(int j, int m) const {
    for (const auto& [jj, mm] : indices)
      if (jj == j && mm == m) return true;
    return false;
  }

  std::size_t size() const { return indices.size(); }
};

}  // namespace smrt
