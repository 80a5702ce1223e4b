#pragma once

namespace moe {

inline constexpr const char* kToolName = "moelab";
inline constexpr const char* kToolVersion = "0.1.0";

} // namespace moe
