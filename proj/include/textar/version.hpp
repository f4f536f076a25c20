#pragma once

namespace textar {

inline constexpr const char* kVersion = "0.1.0";

}
