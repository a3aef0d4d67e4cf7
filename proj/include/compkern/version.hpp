#pragma once

namespace compkern {
inline constexpr const char* kVersion = "0.1.0";
}
