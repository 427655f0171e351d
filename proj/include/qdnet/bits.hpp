#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace qdnet {

// Key material at the protocol level: one bit per element, values 0 or 1.
using Bits = std::vector<uint8_t>;

// MSB-first packing; trailing bits of the last byte are zero.
std::vector<uint8_t> pack_bits(std::span<const uint8_t> bits);
Bits unpack_bits(std::span<const uint8_t> bytes, size_t nbits);

}  // namespace qdnet
