#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctsel {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when the integrator produces a non-finite state.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(what), time_(std::nan("")) {}
  DivergenceError(const std::string& what, double time)
      : Error(what + " (t = " + std::to_string(time) + ")"), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Version, flavor, or architecture mismatch when reading a stored artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctsel
