#include "hetreg/textio.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "hetreg/errors.hpp"

namespace hetreg {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_double_hex(double v) {
    char buf[64];
    const int n = std::snprintf(buf, sizeof(buf), "%a", v);
    return std::string(buf, buf + n);
}

double parse_double(std::string_view token, const std::string& context) {
    if (token.empty()) {
        throw ParseError(context + ": empty numeric field");
    }
    // strtod handles both decimal and hexfloat forms.
    std::string owned(token);
    const char* begin = owned.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + owned.size()) {
        throw ParseError(context + ": not a number: '" + owned + "'");
    }
    return v;
}

}  // namespace hetreg
