#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace inflect {

// Base class for every error the library raises. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an API precondition (wrong arity, bad flag, empty input).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes do not conform to the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Operation is undefined for the given input (e.g. softmax over nothing).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Symbol or ID outside the vocabulary.
class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf encountered during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace inflect
