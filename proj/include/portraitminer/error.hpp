#pragma once

#include <stdexcept>
#include <string>

namespace portraitminer {

// Exit codes surfaced by the command-line driver.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kInfeasible = 4,
  kInternal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

// A requested protocol (e.g. a split) cannot be satisfied by the data.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what) : Error(ExitCode::kInfeasible, what) {}
};

// Numerical failure or violated precondition inside an algorithm.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kData, what) {}
};

}  // namespace portraitminer
