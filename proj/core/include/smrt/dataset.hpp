#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smrt/types.hpp"

namespace smrt {

// One entry of the metadata file: which column is an outcome and how to
// turn it into level indices.
struct OutcomeSpec {
  std::string name;
  std::string kind = "ordinal";  // "binary" | "ordinal" | "continuous"
  int levels = 0;                // continuous: bins (default 10); ordinal: 0 = infer
  std::optional<double> clampLow;
  std::optional<double> clampHigh;
};

// Rank-discretize a column into `levels` bins of near-equal size.
// Ranks are stable (ties broken by subject index), so ties at a bin
// boundary split deterministically with the earlier subjects in the
// lower level; y_i < y_k implies level(i) <= level(k).
VectorXi rank_discretize(const VectorXd& y, int levels);

// Loads a delimiter-separated data file (header row; tab or comma) plus a
// JSON metadata file {"outcomes":[{name, kind, levels?, clampLow?,
// clampHigh?}]}. Columns not named as outcomes become predictors.
// Continuous outcomes are rank-discretized (clamp bounds first map extreme
// values into the boundary categories). Returns a validated Dataset.
Dataset load_dataset(const std::string& dataPath, const std::string& metaPath);

// Inverse of load_dataset for already-discretized data: writes a TSV with
// level indices and a metadata file that reloads to the identical Dataset.
void save_dataset(const Dataset& ds, const std::string& dataPath,
                  const std::string& metaPath);

}  // namespace smrt
