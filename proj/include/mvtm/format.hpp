#pragma once

#include <string>

namespace mvtm {

/// Decimal text with 17 significant digits (round-trips any double).
std::string format_double(double value);

}  // namespace mvtm
