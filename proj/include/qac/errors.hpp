#pragma once

#include <stdexcept>
#include <string>

namespace qac {

/// Invalid configuration value (negative rate, zero beam, bad fractions).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke a documented precondition (unsorted log, malformed token stream).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input that cannot be represented within the model limits.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed text input or unreadable file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ConfigMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// NaN or Inf surfaced in a loss or gradient.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qac
