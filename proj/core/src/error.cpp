#include "osr/error.hpp"

namespace osr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Input: return "input";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::NonFinite: return "non_finite";
  }
  return "unknown";
}

}  // namespace osr
