#pragma once

#include <cstdio>
#include <string>

namespace adagent {

// Fixed-precision rendering for report text; keeps prompt payloads
// byte-stable across runs and platforms.
inline std::string format_fixed(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

}  // namespace adagent
