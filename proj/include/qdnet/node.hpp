#pragma once

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "qdnet/bus.hpp"
#include "qdnet/config.hpp"
#include "qdnet/engine.hpp"
#include "qdnet/keystore.hpp"
#include "qdnet/log.hpp"

namespace httplib {
class Server;
}

namespace qdnet {

struct NodeOptions {
    double ttl_s = 600.0;
    int default_key_size_bits = 256;
    int min_key_size_bits = 8;
    int max_key_size_bits = 65536;
    int max_key_per_request = 1;
    double engine_timeout_s = 120.0;
    uint16_t relay_port = 0;  // 0 -> api_port + 1
    std::string log_path;     // empty -> stderr
};

// Per-node daemon: ETSI GS QKD 014 HTTP front, bus handler for modeling
// results, TTL key store, and the trusted-node relay channel. The API front
// and the bus handler run concurrently; a blocked get_key never prevents
// servicing get_key_with_ids.
class NodeService {
   public:
    NodeService(NetworkConfig config, std::string node_name, NodeOptions opts);
    ~NodeService();

    NodeService(const NodeService&) = delete;
    NodeService& operator=(const NodeService&) = delete;

    void start();
    void stop();

    uint16_t api_port() const { return api_port_; }
    uint16_t relay_port() const { return relay_port_; }
    const std::string& name() const { return name_; }
    const std::string& sae_id() const { return self_->sae_id; }
    KeyStore& store() { return store_; }

   private:
    struct PendingRequest {
        bool done = false;
        json result;
    };

    void setup_routes();
    void on_bus_result(const BusMessage& msg);
    void relay_loop();
    json handle_relay_frame(const json& frame);
    json wait_for_result(const std::string& request_id);

    NetworkConfig config_;
    std::string name_;
    const NodeDecl* self_ = nullptr;
    NodeOptions opts_;
    uint16_t api_port_ = 0;
    uint16_t relay_port_ = 0;

    KeyStore store_;
    EventLog log_;
    BusClient bus_;
    std::unique_ptr<httplib::Server> http_;
    std::thread http_thread_;
    std::thread relay_thread_;
    std::thread purge_thread_;
    int relay_listen_fd_ = -1;
    std::atomic<bool> running_{false};

    std::mutex pending_mutex_;
    std::condition_variable pending_cv_;
    std::map<std::string, PendingRequest> pending_;
};

}  // namespace qdnet
