#pragma once

#include <stdexcept>
#include <string>

#include "dftc/types.hpp"

namespace dftc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Non-finite or out-of-bounds state reached during integration.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, const StateVector& state)
      : Error(what), state_(state) {}
  const StateVector& state() const { return state_; }

 private:
  StateVector state_;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class InstabilityError : public Error {
 public:
  using Error::Error;
};

class UnobservableError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dftc
