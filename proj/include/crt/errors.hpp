#pragma once

#include <stdexcept>
#include <string>

namespace crt {

// Bad input: malformed data, config, or a contract violation. CLI exit 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Solver or statistic failure: NaN, separation, non-convergence. CLI exit 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace crt
