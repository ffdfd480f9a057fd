#pragma once

namespace reef {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace reef
