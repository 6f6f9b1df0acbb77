#pragma once

#include <stdexcept>
#include <string>

namespace wse {

// Failure categories. The CLI maps each one onto a process exit code.
enum class ErrorKind {
  kConfig,
  kData,
  kProvider,
  kMetric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Stable machine-readable code, e.g. "data.invariant".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string code = "config.invalid")
      : Error(ErrorKind::kConfig, std::move(code), message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message, std::string code = "data.invalid")
      : Error(ErrorKind::kData, std::move(code), message) {}
};

class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& message, std::string code = "provider.failure")
      : Error(ErrorKind::kProvider, std::move(code), message) {}
};

// Endpoint could not be reached after the configured retries.
class TransportError : public ProviderError {
 public:
  explicit TransportError(const std::string& message)
      : ProviderError(message, "provider.transport") {}
};

// Endpoint answered, but the answer breaks the wire contract.
class ProtocolError : public ProviderError {
 public:
  explicit ProtocolError(const std::string& message)
      : ProviderError(message, "provider.protocol") {}
};

// A metric is not defined for the given inputs (e.g. single-class labels).
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& message)
      : Error(ErrorKind::kMetric, "metric.undefined", message) {}
};

}  // namespace wse
