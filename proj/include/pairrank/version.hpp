#pragma once

namespace pairrank {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pairrank
