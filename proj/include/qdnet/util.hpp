#pragma once

#include <chrono>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace qdnet {

std::string base64_encode(std::span<const uint8_t> data);
std::vector<uint8_t> base64_decode(std::string_view text);  // throws std::invalid_argument

std::string to_hex(std::span<const uint8_t> data);

// Canonical 128-bit identifier in 8-4-4-4-12 hex form.
std::string make_uuid(std::mt19937_64& rng);
std::string make_uuid();  // seeded from std::random_device

// splitmix64-style mixing for deriving per-stream seeds.
uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c);

// Monotonic clock in seconds since an arbitrary epoch.
double monotonic_s();

// Wall-clock ISO-8601 timestamp with millisecond precision (UTC).
std::string iso_timestamp();

// Binds an ephemeral TCP port, closes the socket and returns the port number.
uint16_t pick_free_port();

// One-time-pad XOR; throws std::invalid_argument on length mismatch.
std::vector<uint8_t> xor_bytes(std::span<const uint8_t> a,
                               std::span<const uint8_t> b);

inline void sleep_s(double s) {
    if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
}

}  // namespace qdnet
