#include "avalign/error.hpp"

namespace avalign {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::missing_file: return "missing file";
    case ErrorKind::malformed_header: return "malformed header";
    case ErrorKind::unsupported_encoding: return "unsupported encoding";
    case ErrorKind::unreadable_image: return "unreadable image";
    case ErrorKind::inconsistent_dimensions: return "inconsistent dimensions";
    case ErrorKind::too_few_frames: return "too few frames";
    case ErrorKind::too_short: return "clip too short";
    case ErrorKind::malformed_data: return "malformed data";
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::io: return "i/o error";
  }
  return "unknown error";
}

}  // namespace avalign
