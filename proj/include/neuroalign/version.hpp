#pragma once

namespace neuroalign {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace neuroalign
