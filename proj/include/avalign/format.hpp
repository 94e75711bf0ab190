#pragma once

#include <string>
#include <string_view>

namespace avalign {

/// Fixed-point rendering with six decimals and '.' as separator,
/// independent of the global locale.
std::string fixed6(double value);

/// JSON string literal (quoted and escaped).
std::string json_quote(std::string_view text);

}  // namespace avalign
