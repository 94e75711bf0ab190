#include "avalign/format.hpp"

#include <charconv>
#include <cmath>

#include <nlohmann/json.hpp>

namespace avalign {

std::string fixed6(double value) {
  if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
  // Avoid "-0.000000" for tiny negatives.
  if (std::abs(value) < 5e-7) value = 0.0;
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, 6);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

std::string json_quote(std::string_view text) {
  return nlohmann::json(std::string(text)).dump();
}

}  // namespace avalign
