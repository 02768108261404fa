#include "mvtm/format.hpp"

#include <charconv>

namespace mvtm {

std::string format_double(double value) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

}  // namespace mvtm
