#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rtgrasp {

// Raised for malformed annotation/config text. `line` is 1-based, 0 when unknown.
struct FormatError : public std::runtime_error {
  std::size_t line;
  explicit FormatError(const std::string& message, std::size_t line_ = 0)
      : std::runtime_error(line_ ? message + " (line " + std::to_string(line_) + ")" : message), line(line_) {}
};

struct DegenerateRectangleError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : public std::logic_error {
  using std::logic_error::logic_error;
};

struct ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Network / endpoint failure. `attempts` is how many requests were made before giving up.
struct TransportError : public std::runtime_error {
  int attempts = 0;
  int status = 0;  // HTTP status, 0 for connection-level failures
  TransportError(const std::string& message, int attempts_, int status_ = 0)
      : std::runtime_error(message), attempts(attempts_), status(status_) {}
};

}  // namespace rtgrasp
