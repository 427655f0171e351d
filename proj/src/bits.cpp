#include "qdnet/bits.hpp"

namespace qdnet {

std::vector<uint8_t> pack_bits(std::span<const uint8_t> bits) {
    std::vector<uint8_t> out((bits.size() + 7) / 8, 0);
    for (size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) out[i / 8] |= static_cast<uint8_t>(0x80u >> (i % 8));
    }
    return out;
}

Bits unpack_bits(std::span<const uint8_t> bytes, size_t nbits) {
    Bits out(nbits, 0);
    for (size_t i = 0; i < nbits && i / 8 < bytes.size(); ++i) {
        out[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u;
    }
    return out;
}

}  // namespace qdnet
