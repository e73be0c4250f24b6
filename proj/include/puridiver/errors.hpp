#pragma once

#include <stdexcept>
#include <string>

namespace puridiver {

// Bad configuration or malformed input files. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values encountered mid-run. CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace puridiver
