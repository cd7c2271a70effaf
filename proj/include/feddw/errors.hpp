#pragma once

#include <stdexcept>
#include <string>

namespace feddw {

// Every library failure derives from Error; kind() is the stable tag the CLI
// writes into its machine-readable error report.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct InvalidInput : Error {
  explicit InvalidInput(const std::string& what) : Error("invalid-input", what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct TrainingDiverged : Error {
  explicit TrainingDiverged(const std::string& what) : Error("training-diverged", what) {}
};

struct OracleFailure : Error {
  explicit OracleFailure(const std::string& what) : Error("oracle-failure", what) {}
};

struct RoundFailure : Error {
  explicit RoundFailure(const std::string& what) : Error("round-failure", what) {}
};

struct NotFound : Error {
  explicit NotFound(const std::string& what) : Error("not-found", what) {}
};

struct Refusal : Error {
  explicit Refusal(const std::string& what) : Error("refusal", what) {}
};

}  // namespace feddw
