#pragma once

#include <cstdint>
#include <string_view>

namespace tailret {

// MurmurHash3 x86_32. Stable across platforms and runs for a given seed.
std::uint32_t murmur3_32(std::string_view key, std::uint32_t seed);

}  // namespace tailret
