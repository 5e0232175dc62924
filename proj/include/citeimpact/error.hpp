#pragma once

#include <stdexcept>
#include <string>

namespace citeimpact {

enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kParse,
  kValidation,
  kTemporal,
  kDimension,
  kProvider,
  kMissingArtifact,
  kResponse,
  kTraining,
  kInternal,
};

const char* to_string(ErrorKind kind) noexcept;

// Single exception type for the library; the kind maps onto C API status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace citeimpact
