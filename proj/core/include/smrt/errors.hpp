#pragma once

#include <stdexcept>
#include <string>

namespace smrt {

// Bad inputs or contract violations (files, shapes, degenerate outcomes).
// The CLI maps these to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures: non-convergence, singular information, failed draws.
// The CLI maps these to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace smrt
