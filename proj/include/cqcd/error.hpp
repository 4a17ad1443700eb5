#pragma once

#include <stdexcept>
#include <string>

namespace cqcd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of two operands disagree, or an image is too small for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A file exists but its contents are not a supported or well-formed format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses or similar numerical breakdowns during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cqcd
