#pragma once

#include <stdexcept>
#include <string>

namespace gaplab {

// Base for all library errors so callers can catch the whole family at once.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A row that cannot be projected to the unit sphere (norm below 1e-12).
struct ZeroVectorError : Error {
  using Error::Error;
};

// Stabilized computation still produced a non-finite value.
struct NumericalOverflowError : Error {
  using Error::Error;
};

// Batch too small for a term whose sum excludes the diagonal.
struct DegenerateBatchError : Error {
  using Error::Error;
};

struct TooFewSamplesError : Error {
  using Error::Error;
};

// Zero total variance; no principal directions exist.
struct DegenerateDataError : Error {
  using Error::Error;
};

struct GridTooSmallError : Error {
  using Error::Error;
};

// Full-data loss blew past the divergence guard.
struct DivergenceError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace gaplab
