#pragma once

#include <stdexcept>
#include <string>

namespace cabcnn {

// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension disagreements.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Malformed or incompatible input data (files, manifests, labels).
class DataError : public Error {
  public:
    using Error::Error;
};

// File system failures.
class IoError : public Error {
  public:
    using Error::Error;
};

// Non-finite values, failed numeric checks.
class NumericError : public Error {
  public:
    using Error::Error;
};

}  // namespace cabcnn
