#pragma once

#include <stdexcept>
#include <string>

namespace eegpolicy {

enum class Errc {
  io,
  malformed_header,
  length_mismatch,
  duplicate_name,
  missing_column,
  domain,
  parse,
  invalid_argument,
  degenerate,
  not_found,
};

const char* to_string(Errc code) noexcept;

// Every failure in the library is reported through this type. `field` names the
// offending input (a header key, a column, a channel, a parameter).
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string field, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + " [" + field + "]: " + message),
        code_(code),
        field_(std::move(field)) {}

  Errc code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  Errc code_;
  std::string field_;
};

}  // namespace eegpolicy
