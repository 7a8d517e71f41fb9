#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace samwalker {

/// Base for all library errors. `exit_code()` maps onto the CLI contract:
/// 2 usage/config, 3 guard refusal, 1 internal.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  int exit_code() const noexcept override { return 2; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public Error {
 public:
  explicit EmptyDatasetError(const std::string& what) : Error("empty dataset: " + what) {}
  int exit_code() const noexcept override { return 2; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// A size guard on a dense or brute-force routine refused the input.
class GuardError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A sampler cannot produce an unbiased estimator for the requested target.
class EstimatorError : public Error {
 public:
  using Error::Error;
};

}  // namespace samwalker
