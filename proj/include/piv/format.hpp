#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace piv {

/// Shortest decimal text that parses back to the same double.
inline std::string fmt_double(double x)
{
    if (std::isnan(x)) {
        return "nan";
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

}  // namespace piv
