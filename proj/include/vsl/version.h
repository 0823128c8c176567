#pragma once

namespace vsl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vsl
