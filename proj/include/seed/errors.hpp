#pragma once

#include <stdexcept>
#include <string>

namespace seed {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or model/checkpoint combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, empty or too-short data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument to a numeric routine (lengths, ranges).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input carries no information for the requested statistic (zero power, zero variance).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace seed
