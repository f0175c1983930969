#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toxkge {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line (or row) number when known.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Input data violates an operation's precondition.
class DataError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Training diverged or a computation produced a non-finite value.
class NumericalError : public Error {
public:
  using Error::Error;
};

}  // namespace toxkge
