#pragma once

#include <stdexcept>
#include <string>

namespace fei {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: out-of-range hyperparameters, unknown keys, task mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that violates a shape or format contract.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Text input that failed to parse; carries the 1-based line number.
class ParseError : public InvalidInputError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : InvalidInputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Stored data whose checksum does not match its payload.
class ChecksumError : public InvalidInputError {
 public:
  using InvalidInputError::InvalidInputError;
};

/// Non-finite values produced during training or evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fei
