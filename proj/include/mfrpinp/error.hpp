#pragma once

#include <stdexcept>
#include <string>

namespace mfrpinp {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that an operation cannot combine.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by an operation, or an input outside its numeric domain.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Precondition violations on arguments (non-positive step, bad rates, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input files. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Unknown keys or invalid values in a run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfrpinp
