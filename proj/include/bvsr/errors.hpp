#pragma once

#include <stdexcept>
#include <string>

namespace bvsr {

// Invalid arguments to the numerical operations are reported with
// std::invalid_argument. The types below cover everything the CLI maps to a
// distinct exit code.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotFoundError : DataError {
  using DataError::DataError;
};

struct ParseError : DataError {
  using DataError::DataError;
};

// Raised when training produces a non-finite loss.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bvsr
