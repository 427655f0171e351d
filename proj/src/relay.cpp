#include "qdnet/relay.hpp"

#include <httplib.h>

#include <stdexcept>

#include "qdnet/util.hpp"

namespace qdnet {

RelayPath RelayPath::validate(const std::vector<std::string>& nodes,
                              const NetworkConfig& config) {
    if (nodes.size() < 3)
        throw std::invalid_argument(
            "relay path needs at least one trusted node; use a direct key "
            "request for adjacent endpoints");
    for (const auto& name : nodes) {
        if (!config.find_node(name))
            throw std::invalid_argument("unknown node '" + name + "' in path");
    }
    for (size_t i = 0; i + 1 < nodes.size(); ++i) {
        if (!config.adjacent(nodes[i], nodes[i + 1]))
            throw std::invalid_argument("nodes '" + nodes[i] + "' and '" +
                                        nodes[i + 1] +
                                        "' are not adjacent; no QKD link");
    }
    return RelayPath{nodes};
}

RelayClient::RelayClient(NetworkConfig config, std::string api_host)
    : config_(std::move(config)), api_host_(std::move(api_host)) {}

uint16_t RelayClient::relay_port_of(const std::string& node_name) const {
    const NodeDecl* node = config_.find_node(node_name);
    if (!node) throw std::invalid_argument("unknown node '" + node_name + "'");
    return static_cast<uint16_t>(node->api_port + 1);
}

RelayClient::HopKey RelayClient::request_hop_key(
    const std::string& initiator_node, const std::string& peer_node,
    int size_bits) {
    const NodeDecl* initiator = config_.find_node(initiator_node);
    const NodeDecl* peer = config_.find_node(peer_node);
    httplib::Client client(api_host_, initiator->api_port);
    client.set_read_timeout(180, 0);
    auto res = client.Get("/api/v1/keys/" + peer->sae_id +
                          "/enc_keys?number=1&size=" + std::to_string(size_bits));
    if (!res)
        throw std::runtime_error("node '" + initiator_node + "' unreachable");
    if (res->status != 200)
        throw std::runtime_error("hop key retrieval failed on " +
                                 initiator_node + ": " + res->body);
    json body = json::parse(res->body);
    const json& entry = body.at("keys").at(0);
    return {entry.at("key_ID").get<std::string>(),
            base64_decode(entry.at("key").get<std::string>())};
}

json RelayClient::classical_exchange(const std::string& node_name,
                                     const json& frame,
                                     std::vector<std::string>* capture) {
    if (capture) capture->push_back(frame.dump());
    // The peer's bus copy of a hop key lands at its scheduled completion
    // time; retry briefly while the store catches up.
    std::string last_error;
    for (int attempt = 0; attempt < 50; ++attempt) {
        int fd = tcp_connect(api_host_, relay_port_of(node_name));
        json reply;
        try {
            write_frame(fd, frame);
            auto r = read_frame(fd);
            tcp_close(fd);
            if (!r) throw std::runtime_error("relay channel closed");
            reply = *r;
        } catch (...) {
            tcp_close(fd);
            throw;
        }
        if (capture) capture->push_back(reply.dump());
        if (reply.value("status", "") == "ok") return reply;
        last_error = reply.value("message", "relay error");
        if (last_error.find("unknown or expired") == std::string::npos)
            throw std::runtime_error(last_error);
        sleep_s(0.1);
    }
    throw std::runtime_error(last_error);
}

RelayResult RelayClient::relay_key(const RelayPath& path, int size_bits,
                                   std::mt19937_64& rng,
                                   std::vector<std::string>* frame_capture) {
    if (size_bits < 8 || size_bits % 8 != 0)
        throw std::invalid_argument("size must be a positive multiple of 8");
    const auto& nodes = path.nodes;

    // One fresh hop key per consecutive pair; each id is used exactly once.
    std::vector<HopKey> hops;
    hops.reserve(nodes.size() - 1);
    for (size_t i = 0; i + 1 < nodes.size(); ++i)
        hops.push_back(request_hop_key(nodes[i], nodes[i + 1], size_bits));

    std::vector<uint8_t> end_to_end(static_cast<size_t>(size_bits) / 8);
    for (auto& b : end_to_end) b = static_cast<uint8_t>(rng());
    std::string key_id = make_uuid(rng);

    std::vector<uint8_t> ciphertext = xor_bytes(end_to_end, hops[0].material);
    for (size_t i = 1; i + 1 < nodes.size(); ++i) {
        json frame = {{"kind", "relay_hop"},
                      {"message_id", make_uuid(rng)},
                      {"sent_at", iso_timestamp()},
                      {"payload",
                       {{"upstream_key_id", hops[i - 1].key_id},
                        {"downstream_key_id", hops[i].key_id},
                        {"ciphertext", base64_encode(ciphertext)}}}};
        json reply = classical_exchange(nodes[i], frame, frame_capture);
        ciphertext =
            base64_decode(reply.at("payload").at("ciphertext").get<std::string>());
    }

    const NodeDecl* origin = config_.find_node(nodes.front());
    json store_frame = {{"kind", "relay_store"},
                        {"message_id", make_uuid(rng)},
                        {"sent_at", iso_timestamp()},
                        {"payload",
                         {{"key_id", key_id},
                          {"downstream_key_id", hops.back().key_id},
                          {"ciphertext", base64_encode(ciphertext)},
                          {"origin_sae", origin->sae_id}}}};
    classical_exchange(nodes.back(), store_frame, frame_capture);

    return {std::move(end_to_end), key_id};
}

}  // namespace qdnet
