#pragma once

namespace vib {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vib
