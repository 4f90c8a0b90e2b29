#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace belx {

enum class ErrorKind {
  kConfig,            // bad configuration or CLI arguments
  kFormat,            // unparseable or mismatched input format
  kIo,                // stream / filesystem failure
  kPrecondition,      // caller violated a documented precondition
  kNumeric,           // non-finite intermediate value
  kDegenerateVector,  // zero-norm vector where a direction is required
  kMissingEmbedding,  // lookup backend has no vector for a string
  kTransport,         // remote call failed after retries
  kInvariant,         // internal invariant violated (pipeline bug)
  kIntegrity,         // artifact checksum / fingerprint mismatch
  kPipeline,          // stage-level failure
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Remote call failure carrying the number of attempts made.
class TransportError : public Error {
 public:
  TransportError(const std::string& message, int attempts)
      : Error(ErrorKind::kTransport, message), attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }
  bool retryable() const noexcept { return true; }

 private:
  int attempts_;
};

}  // namespace belx
