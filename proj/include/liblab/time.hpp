// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

// Process times are stored as integer ticks so that comparisons inside
// indicator functions are exact. Override at build time if needed.
#ifndef LIBLAB_TICK_SECONDS
#define LIBLAB_TICK_SECONDS 1e-6
#endif

namespace liblab {

using Tick = std::int64_t;

inline constexpr double kTickSeconds = LIBLAB_TICK_SECONDS;

inline Tick to_ticks(double seconds) {
  if (!std::isfinite(seconds) || seconds < 0.0)
    throw std::invalid_argument("time must be finite and non-negative, got " +
                                std::to_string(seconds));
  return static_cast<Tick>(std::llround(seconds / kTickSeconds));
}

inline double to_seconds(Tick t) { return static_cast<double>(t) * kTickSeconds; }

// Shortest decimal rendering of a tick count, e.g. 500000 -> "0.5".
inline std::string format_time(Tick t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", to_seconds(t));
  std::string s(buf);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

}  // namespace liblab
