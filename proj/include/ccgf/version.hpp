#pragma once

#define CCGF_VERSION_MAJOR 0
#define CCGF_VERSION_MINOR 1
#define CCGF_VERSION_PATCH 0

namespace ccgf {

inline constexpr const char* version_string = "0.1.0";

}  // namespace ccgf
