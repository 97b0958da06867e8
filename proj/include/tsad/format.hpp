#pragma once

#include <cstdio>
#include <string>

namespace tsad {

// Fixed-format floating point rendering so emitted files are byte-stable.
// CSV values use 9 significant digits; checkpoints use 17 (lossless for
// IEEE doubles).
inline std::string format_g(double x, int significant = 9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", significant, x);
    return std::string(buf);
}

inline std::string format_fixed(double x, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, x);
    return std::string(buf);
}

} // namespace tsad
