#pragma once

namespace hsaw {

inline constexpr const char* version() { return "0.1.0"; }

} // namespace hsaw
