#pragma once

namespace vseg {

inline constexpr const char* kVersion = "vsegkit 0.1.0";

}  // namespace vseg
