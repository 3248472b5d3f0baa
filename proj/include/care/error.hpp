#pragma once

#include <stdexcept>
#include <string>

namespace care {

/// Invalid configuration or arguments (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor shape or rank violation.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced, or training divergence (CLI exit code 4).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file content: bad magic, version, truncation (CLI exit code 3).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failure (CLI exit code 3).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Gradient-tape misuse: backward on a consumed tape, output not on tape.
struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace care
