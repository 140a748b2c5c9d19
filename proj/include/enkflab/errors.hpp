#pragma once

#include <stdexcept>
#include <string>

namespace enkflab {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid model or filter configuration (non-SPD covariance, bad dimensions).
class ConfigError : public Error {
public:
  using Error::Error;
};

// Caller violated an operation precondition (empty probe set, R < 1, ...).
class UsageError : public Error {
public:
  using Error::Error;
};

// Grid truncation budget exceeded; carries the measured boundary mass.
class TruncationError : public Error {
public:
  TruncationError(const std::string& what, double boundary_mass)
      : Error(what), boundary_mass(boundary_mass) {}
  double boundary_mass;
};

// Degenerate measure, gain or likelihood (singular covariance, underflow).
class DegenerateError : public Error {
public:
  using Error::Error;
};

// Query outside the represented domain (datum off the y-grid).
class OutOfRangeError : public Error {
public:
  using Error::Error;
};

// Internal invariant broken; indicates a bug, not a user mistake.
class InternalError : public Error {
public:
  using Error::Error;
};

}  // namespace enkflab
