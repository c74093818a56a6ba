#pragma once

#include <stdexcept>
#include <string>

namespace sinkdem {

// Bad caller input: shapes, ranges, non-finite values.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

// Computation produced NaN/Inf or otherwise broke down mid-flight.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File contents do not match the expected binary/text format.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse, e.g. backward without a matching forward cache.
struct ProtocolError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace sinkdem
