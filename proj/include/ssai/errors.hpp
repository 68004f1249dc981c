#pragma once

#include <stdexcept>
#include <string>

namespace ssai {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class WarmupError : public RangeError {
 public:
  WarmupError(const std::string& what, std::size_t required)
      : RangeError(what), required_(required) {}
  std::size_t required_rows() const { return required_; }

 private:
  std::size_t required_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class RankError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A fit or test whose input carries no usable variation.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Attempt to evaluate a model on dates it was fitted on.
class LeakageError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class PolicyFaultError : public Error {
 public:
  PolicyFaultError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssai
