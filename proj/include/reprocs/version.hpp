#pragma once

namespace reprocs {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace reprocs
