#pragma once

namespace sdmlab {

inline constexpr const char* kVersion = "0.1.0";

} // namespace sdmlab
