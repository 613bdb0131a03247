#pragma once

#include <algorithm>
#include <array>
#include <bit>

namespace specrec::detail {

inline constexpr bool kLittleEndianHost = std::endian::native == std::endian::little;

template <typename U>
U byteswap(U v) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(U)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<U>(bytes);
}

} // namespace specrec::detail
