#pragma once

#include <stdexcept>
#include <string>

namespace rerank {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command-line usage. Maps to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data. Maps to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;

  static ValidationError at(const std::string& file, std::size_t line, const std::string& what) {
    return ValidationError(file + ":" + std::to_string(line) + ": " + what);
  }
};

/// Transport or server failure while talking to a model backend. Maps to exit code 3.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// The server answered, but not in a form we can use (e.g. a decision token
/// missing from the returned top log-probabilities).
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace rerank
