#pragma once

#include <stdexcept>
#include <string>

namespace uniembed {

// Base for every error raised by the library. The CLI maps subclasses to
// exit codes: InputError/ConfigError/ParseError -> 2, the rest -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments to a library call (shape mismatch, out-of-range value).
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration detected before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A dataset or checkpoint file could not be parsed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Numerically degenerate input (zero-norm rows, collapsed batches).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace uniembed
