#ifndef HEDN_ERROR_HPP
#define HEDN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hedn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (files, labels, banks).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A loss or parameter became non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hedn

#endif  // HEDN_ERROR_HPP
