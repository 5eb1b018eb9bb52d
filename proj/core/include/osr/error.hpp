#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace osr {

enum class ErrorKind {
  Input,      // shape mismatch, out-of-range argument
  NotFound,   // registry entry, file, dataset id
  Config,     // invalid or unknown configuration key
  Io,         // unreadable / unwritable / corrupt file
  NonFinite,  // a loss or parameter went nan/inf
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so the CLI can emit a
/// machine-readable error document.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace osr
