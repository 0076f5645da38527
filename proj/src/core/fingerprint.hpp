#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace emseg {

std::uint64_t fnv1a64(std::string_view text);
std::string fnv1a64_hex(std::string_view text);
std::string to_hex(std::uint64_t v);

} // namespace emseg
