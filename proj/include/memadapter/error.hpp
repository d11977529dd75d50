#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace memadapter {

// Bad input data or a violated precondition. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem or stream failure. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text-format error with the 1-based line it was detected on.
class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, std::string kind)
      : ValidationError("line " + std::to_string(line) + ": " + kind),
        line_(line),
        kind_(std::move(kind)) {}

  std::size_t line() const { return line_; }
  const std::string& kind() const { return kind_; }

 private:
  std::size_t line_;
  std::string kind_;
};

// Constrained decoding could not produce a well-formed sequence.
class DecodeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace memadapter
