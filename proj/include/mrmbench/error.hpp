#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mrmbench {

enum class Errc {
  invalid_argument,
  io,
  bad_magic,
  unsupported_version,
  unsupported_dtype,
  length_mismatch,
  meta_count_mismatch,
  malformed_meta,
  non_finite,
  shape_mismatch,
  out_of_range,
  unknown_dimension,
  insufficient_records,
  empty_input,
  undefined_result,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::io: return "io";
    case Errc::bad_magic: return "bad_magic";
    case Errc::unsupported_version: return "unsupported_version";
    case Errc::unsupported_dtype: return "unsupported_dtype";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::meta_count_mismatch: return "meta_count_mismatch";
    case Errc::malformed_meta: return "malformed_meta";
    case Errc::non_finite: return "non_finite";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::out_of_range: return "out_of_range";
    case Errc::unknown_dimension: return "unknown_dimension";
    case Errc::insufficient_records: return "insufficient_records";
    case Errc::empty_input: return "empty_input";
    case Errc::undefined_result: return "undefined_result";
  }
  return "unknown";
}

/// Every failure raised by the library. `module()` names the component that
/// detected the problem so the CLI can report provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string module, Errc code, const std::string& message)
      : std::runtime_error(module + ": " + message),
        module_(std::move(module)),
        code_(code),
        detail_(message) {}

  const std::string& module() const noexcept { return module_; }
  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string module_;
  Errc code_;
  std::string detail_;
};

}  // namespace mrmbench
