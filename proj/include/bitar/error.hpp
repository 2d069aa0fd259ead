#pragma once

#include <stdexcept>
#include <string>

namespace bitar {

// Base of every error thrown by the library. `kind()` is a stable
// machine-readable tag used by the CLI diagnostic stream.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define BITAR_DEFINE_ERROR(Name, tag)                                    \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(tag, what) {}         \
  }

BITAR_DEFINE_ERROR(InvalidInput, "invalid_input");
BITAR_DEFINE_ERROR(RangeError, "range");
BITAR_DEFINE_ERROR(ContractError, "contract");
BITAR_DEFINE_ERROR(CapacityError, "capacity");
BITAR_DEFINE_ERROR(UnsupportedError, "unsupported");
BITAR_DEFINE_ERROR(LookupError, "lookup");
BITAR_DEFINE_ERROR(DivergenceError, "divergence");

// Container decoding failures, one type per failure mode.
BITAR_DEFINE_ERROR(FormatError, "format");
BITAR_DEFINE_ERROR(BadMagicError, "bad_magic");
BITAR_DEFINE_ERROR(VersionMismatchError, "version_mismatch");
BITAR_DEFINE_ERROR(ChecksumError, "checksum");
BITAR_DEFINE_ERROR(TruncatedError, "truncated");

#undef BITAR_DEFINE_ERROR

}  // namespace bitar
