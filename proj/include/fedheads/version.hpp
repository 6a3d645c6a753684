#pragma once

namespace fedheads {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fedheads
