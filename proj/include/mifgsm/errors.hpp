#pragma once

#include <stdexcept>
#include <string>

namespace mifgsm {

// Base of every error raised by the toolkit. The kind string is stable and is
// what the CLI writes into failure summaries.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MIFGSM_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(Kind, what) {}       \
  };

MIFGSM_DEFINE_ERROR(ParameterError, "parameter")
MIFGSM_DEFINE_ERROR(AlignmentError, "alignment")
MIFGSM_DEFINE_ERROR(IoError, "io")
MIFGSM_DEFINE_ERROR(NoFramesError, "no_frames")
MIFGSM_DEFINE_ERROR(ConfigError, "config")
MIFGSM_DEFINE_ERROR(ContractError, "contract")
MIFGSM_DEFINE_ERROR(EnvironmentError, "environment")
MIFGSM_DEFINE_ERROR(CapabilityError, "capability")
MIFGSM_DEFINE_ERROR(NoObjectError, "no_object")
MIFGSM_DEFINE_ERROR(CompletenessError, "completeness")
MIFGSM_DEFINE_ERROR(OrphanError, "orphan")
MIFGSM_DEFINE_ERROR(DuplicateError, "duplicate")

// Raised when an external provider fails in a way that may succeed on retry
// (connection refused, timeout, non-zero exit).
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what) : Error("provider", what) {}
  bool retryable() const noexcept { return true; }
};

#undef MIFGSM_DEFINE_ERROR

}  // namespace mifgsm
