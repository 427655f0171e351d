#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qdnet/config.hpp"
#include "qdnet/frame.hpp"

namespace qdnet {

// Validated trusted-node path: [initiator, trusted..., target], length >= 3,
// consecutive pairs adjacent.
struct RelayPath {
    std::vector<std::string> nodes;

    static RelayPath validate(const std::vector<std::string>& nodes,
                              const NetworkConfig& config);  // throws
};

struct RelayResult {
    std::vector<uint8_t> key;
    std::string key_id;
};

// Client-side (KME) trusted-node relay over the standard key-delivery API
// plus a direct classical channel to each node. Hop keys pad the end-to-end
// key with one-time-pad XOR; each hop key id is used exactly once.
class RelayClient {
   public:
    explicit RelayClient(NetworkConfig config, std::string api_host = "127.0.0.1");

    // Frames sent over the classical channel are appended to frame_capture
    // when provided (test hook for key-leak scanning).
    RelayResult relay_key(const RelayPath& path, int size_bits,
                          std::mt19937_64& rng,
                          std::vector<std::string>* frame_capture = nullptr);

    // Relay port convention mirrors the node service: api_port + 1.
    uint16_t relay_port_of(const std::string& node_name) const;

   private:
    struct HopKey {
        std::string key_id;
        std::vector<uint8_t> material;
    };

    HopKey request_hop_key(const std::string& initiator_node,
                           const std::string& peer_node, int size_bits);
    json classical_exchange(const std::string& node_name, const json& frame,
                            std::vector<std::string>* capture);

    NetworkConfig config_;
    std::string api_host_;
};

}  // namespace qdnet
