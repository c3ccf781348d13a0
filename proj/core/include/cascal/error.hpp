#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cascal {

enum class Errc {
  invalid_input,
  invalid_argument,
  dimension_mismatch,
  bad_magic,
  version_mismatch,
  truncated_payload,
  label_out_of_range,
  io,
  inconsistent_classes,
  too_few_members,
  config,
  kind_mismatch,
  corrupt_checkpoint,
  missing_input,
};

std::string_view to_string(Errc code) noexcept;

// Every failure in the library surfaces as this exception; `code()` tells
// callers (and the CLI exit-code mapping) which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void raise(Errc code, const std::string& message);

}  // namespace cascal
