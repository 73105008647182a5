#pragma once

#include <stdexcept>
#include <string>

namespace stsun {

/// Base class for every error thrown by the library.
class StsunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: shapes, metadata, configs, task/length rules.
class ValidationError : public StsunError {
 public:
  using StsunError::StsunError;
};

/// Tensor extent mismatch (a ValidationError with operand shapes in the message).
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A NaN or Inf escaped an operation. Never propagated silently.
class NumericError : public StsunError {
 public:
  using StsunError::StsunError;
};

/// File format or filesystem problems.
class IoError : public StsunError {
 public:
  using StsunError::StsunError;
};

}  // namespace stsun
