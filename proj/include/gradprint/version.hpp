// SPDX-License-Identifier: Apache-2.0
#pragma once

#define GRADPRINT_VERSION "0.1.0"

namespace gradprint {

inline constexpr const char* version() { return GRADPRINT_VERSION; }

} // namespace gradprint
