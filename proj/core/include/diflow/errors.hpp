#pragma once

#include <stdexcept>
#include <string>

namespace diflow {

// Base of every error raised by the library. The CLI maps subclasses onto
// distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Raised when a quantity becomes NaN/Inf or an update would leave the
// probability simplex.
class NumericError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public NumericError {
 public:
  using NumericError::NumericError;
};

class StepSizeError : public NumericError {
 public:
  using NumericError::NumericError;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class InconsistencyError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace diflow
