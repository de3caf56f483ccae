#include "eegpolicy/error.hpp"

namespace eegpolicy {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::io: return "io";
    case Errc::malformed_header: return "malformed_header";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::duplicate_name: return "duplicate_name";
    case Errc::missing_column: return "missing_column";
    case Errc::domain: return "domain";
    case Errc::parse: return "parse";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::degenerate: return "degenerate";
    case Errc::not_found: return "not_found";
  }
  return "unknown";
}

}  // namespace eegpolicy
