#pragma once

#include <stdexcept>
#include <string>

namespace lindbladiff {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of two operands are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An input violates a documented precondition (bad index, negative rate, non-Hermitian operator...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A matrix handed in as a density operator fails the state invariants.
class InvalidState : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Numerical breakdown: non-finite values, step underflow, step budget exhausted, replay divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Cotangent depends on the eigenvector gauge inside a degenerate cluster.
class GaugeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed configuration or model file. `path()` is a JSON pointer into the offending document.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Failure inside a composite pipeline, tagged with the stage that raised it.
class StageError : public NumericalError {
 public:
  StageError(std::string stage, const std::string& message)
      : NumericalError(stage + ": " + message), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace lindbladiff
