#pragma once

#include <stdexcept>
#include <string>

namespace sysid {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Incompatible operand shapes; message names both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be invertible is numerically singular.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Iterative numerics failed to converge or produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (unknown key, bad type, out-of-range value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sysid
