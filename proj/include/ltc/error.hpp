#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ltc {

enum class ErrorKind {
  kDimension,
  kNumeric,
  kDomain,
  kConstraint,
  kUsage,
  kFormat,
  kChecksum,
  kIo,
  kConfig,
  kStream,
};

constexpr std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kConstraint: return "constraint";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kChecksum: return "checksum";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kStream: return "stream";
  }
  return "unknown";
}

// All library failures are reported through this one exception type; the
// kind is what callers (and the CLI's one-line error output) branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace ltc
