#include "belx/error.hpp"

namespace belx {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kDegenerateVector: return "degenerate-vector";
    case ErrorKind::kMissingEmbedding: return "missing-embedding";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kInvariant: return "invariant";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kPipeline: return "pipeline";
  }
  return "unknown";
}

}  // namespace belx
