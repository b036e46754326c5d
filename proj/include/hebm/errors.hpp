#pragma once

#include <stdexcept>
#include <string>

namespace hebm {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched array extents. Arrays never broadcast.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence, non-integrable densities.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked on an object in the wrong state (e.g. empty tape).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid statistic, schedule, or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (empty inputs, k too large, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. The message carries `path:line`.
class ParseError : public Error {
 public:
  ParseError(const std::string& where, std::size_t line, const std::string& what)
      : Error(where + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hebm
