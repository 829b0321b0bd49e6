#pragma once

#include <stdexcept>
#include <string>

namespace facechannel {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range scalar arguments (rates, indices, sizes).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed datasets, manifests, targets or metric inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace facechannel
