#pragma once

namespace heatsmooth {

inline constexpr const char* kToolName = "heatsmooth";
inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace heatsmooth
