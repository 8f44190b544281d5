#pragma once

namespace gentau {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gentau
