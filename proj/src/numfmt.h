#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace dmlshift::detail {

// 17 significant digits: enough to round-trip any IEEE-754 double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON has no NaN/Inf literals.
inline std::string json_number(double v) {
  return std::isfinite(v) ? format_double(v) : std::string("null");
}

}  // namespace dmlshift::detail
