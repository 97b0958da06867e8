#pragma once

namespace tsad {

inline constexpr const char* kVersion = "0.1.0";

} // namespace tsad
