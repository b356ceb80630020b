#pragma once

namespace sysid {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kToolName = "stable-sysid";

}  // namespace sysid
