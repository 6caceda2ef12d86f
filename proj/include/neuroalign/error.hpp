#pragma once

#include <stdexcept>
#include <string>

namespace neuroalign {

// Error categories map one-to-one onto CLI exit codes and C API status codes.
enum class ErrorKind {
  InvalidArgument,  // caller violated a precondition
  Config,           // malformed or out-of-range configuration
  Data,             // ingestion or on-disk validation failure
  Runtime,          // numerical or I/O failure during a run
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error(ErrorKind::InvalidArgument, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorKind::Config, message) {}
};

// Missing or unreadable files.
class IngestionError : public Error {
 public:
  explicit IngestionError(const std::string& message)
      : Error(ErrorKind::Data, message) {}
};

// Files that exist but whose content contradicts what was declared.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorKind::Data, message) {}
};

class RuntimeFailure : public Error {
 public:
  explicit RuntimeFailure(const std::string& message)
      : Error(ErrorKind::Runtime, message) {}
};

}  // namespace neuroalign
