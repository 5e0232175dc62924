#include "citeimpact/error.hpp"

namespace citeimpact {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kTemporal: return "temporal";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kProvider: return "provider";
    case ErrorKind::kMissingArtifact: return "missing_artifact";
    case ErrorKind::kResponse: return "response";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace citeimpact
