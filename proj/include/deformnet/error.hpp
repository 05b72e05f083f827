#pragma once

#include <stdexcept>
#include <string>

namespace deformnet {

// Input that violates a documented contract: bad config, malformed file,
// broken mesh invariant, shape mismatch. The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure while computing: inverted element, singular system.
// The CLI maps these to exit code 2.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace deformnet
