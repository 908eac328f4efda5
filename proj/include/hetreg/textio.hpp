#pragma once

#include <string>
#include <string_view>

namespace hetreg {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

/// Hexfloat string (%a); bit-exact round trip, used by checkpoints.
std::string format_double_hex(double v);

/// Strict double parse of the whole token; throws ParseError on failure.
double parse_double(std::string_view token, const std::string& context);

}  // namespace hetreg
