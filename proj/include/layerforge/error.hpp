#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace layerforge {

// Process exit codes: 2 config/usage error, 3 numeric failure, 4 I/O error.
class Error : public std::runtime_error {
 public:
  Error(std::string msg, int exit_code)
      : std::runtime_error(std::move(msg)), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::string msg) : Error(std::move(msg), 2) {}
};

// Shape/extent mismatches. A config-class error (exit 2).
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class NumericError : public Error {
 public:
  explicit NumericError(std::string msg) : Error(std::move(msg), 3) {}
};

class IoError : public Error {
 public:
  explicit IoError(std::string msg) : Error(std::move(msg), 4) {}
};

}  // namespace layerforge
