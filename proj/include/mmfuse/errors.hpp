#pragma once

#include <stdexcept>

namespace mmfuse {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shape violations; message names the offending shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration values (dimensions, fractions, class counts, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input files; message carries the offending line number.
struct ParseError : Error {
  using Error::Error;
};

// Filesystem failures (missing file, unwritable path).
struct IoError : Error {
  using Error::Error;
};

// Metric with no defined value on the given inputs.
struct UndefinedMetricError : Error {
  using Error::Error;
};

}  // namespace mmfuse
