#pragma once

#include <stdexcept>
#include <string>

namespace drumloop {

// Base for every error the library raises on bad input. Callers that only
// care about "the toolkit refused this" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input could not be read or decoded (missing file, bad codec, bad syntax).
class IoError : public Error {
 public:
  using Error::Error;
};

// Input was well formed but the domain rules reject it (song too short,
// nothing percussive to extract). Maps to exit code 2 in the CLI.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ClipTooShort : public DomainError {
 public:
  using DomainError::DomainError;
};

class NoOnsets : public DomainError {
 public:
  using DomainError::DomainError;
};

class GridUndefined : public DomainError {
 public:
  using DomainError::DomainError;
};

class WindowTooShort : public DomainError {
 public:
  using DomainError::DomainError;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0, int column = 0)
      : Error(what), line_(line), column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

// A NaN or infinity showed up in numeric code that must stay finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace drumloop
