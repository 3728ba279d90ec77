// Simulated time base: microseconds from scenario start.
#pragma once

#include <cstdint>

namespace qkdn {

using SimTime = std::int64_t;  // microseconds

constexpr SimTime operator""_ms(unsigned long long v) { return static_cast<SimTime>(v) * 1000; }
constexpr SimTime operator""_s(unsigned long long v) { return static_cast<SimTime>(v) * 1000000; }

inline double to_seconds(SimTime t) { return static_cast<double>(t) / 1e6; }

}  // namespace qkdn
