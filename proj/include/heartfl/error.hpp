#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace heartfl {

// Base for every error raised by the library. Each subclass maps to one
// failure category so callers (notably the bench CLI) can choose an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Violated precondition on an argument (shape, emptiness, schema).
class ContractError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFamilyError : public Error {
 public:
  using Error::Error;
};

class EnumerationLimitError : public Error {
 public:
  using Error::Error;
};

class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, std::vector<std::size_t> features)
      : Error(what), features_(std::move(features)) {}
  const std::vector<std::size_t>& features() const noexcept { return features_; }

 private:
  std::vector<std::size_t> features_;
};

// Non-finite values produced during training or aggregation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace heartfl
