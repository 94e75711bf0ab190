#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avalign {

enum class ErrorKind {
  missing_file,
  malformed_header,
  unsupported_encoding,
  unreadable_image,
  inconsistent_dimensions,
  too_few_frames,
  too_short,
  malformed_data,
  invalid_argument,
  io,
};

std::string_view to_string(ErrorKind kind);

/// Error raised by every fallible operation in the library. The kind is
/// what callers dispatch on (exit codes, per-clip failure reasons); the
/// message carries the offending field or path.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace avalign
