#include "cascal/error.hpp"

namespace cascal {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_input: return "invalid-input";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::bad_magic: return "bad-magic";
    case Errc::version_mismatch: return "version-mismatch";
    case Errc::truncated_payload: return "truncated-payload";
    case Errc::label_out_of_range: return "label-out-of-range";
    case Errc::io: return "io";
    case Errc::inconsistent_classes: return "inconsistent-classes";
    case Errc::too_few_members: return "too-few-members";
    case Errc::config: return "config";
    case Errc::kind_mismatch: return "kind-mismatch";
    case Errc::corrupt_checkpoint: return "corrupt-checkpoint";
    case Errc::missing_input: return "missing-input";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace cascal
