#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "qdnet/bus.hpp"
#include "qdnet/config.hpp"
#include "qdnet/log.hpp"
#include "qdnet/quantum.hpp"

namespace qdnet {

struct ModelingRequest {
    std::string request_id;
    std::string initiator;
    std::string peer;
    uint64_t bits_needed = 0;
    std::string received_at;

    json to_json() const;
    static ModelingRequest from_json(const json& j);
};

struct ModelingResult {
    std::string request_id;
    std::string key_id;
    std::vector<uint8_t> key_material;       // initiator copy
    std::vector<uint8_t> peer_key_material;  // differs only when compromised
    double qber = 0.0;
    double simulated_duration_s = 0.0;
    std::string status = "ok";  // "ok" | "compromised" | "error"
    std::string error;
    uint64_t channel_uses = 0;
    uint64_t bits_generated = 0;
    std::string initiator;
    std::string peer;
};

// Per-link busy-until bookkeeping realizing same-link serialization.
class LinkSchedule {
   public:
    double busy_until() const { return busy_until_; }
    // completion = max(now, busy_until) + duration_s / time_scale;
    // busy_until never decreases.
    double schedule(double now, double duration_s, double time_scale);

   private:
    double busy_until_ = 0.0;
};

enum class RequestErrorKind { unknown_node, not_adjacent, invalid_request };

class RequestError : public std::runtime_error {
   public:
    RequestError(RequestErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    RequestErrorKind kind() const { return kind_; }

   private:
    RequestErrorKind kind_;
};

// Returns the index of the unique link joining initiator and peer; throws
// RequestError otherwise.
size_t validate_request(const ModelingRequest& req, const NetworkConfig& config);

struct EngineOptions {
    std::string log_path;
    double time_scale = 1.0;
    uint64_t seed = 0;
    bool buffering = true;          // keep leftover bits per link
    bool strict_compromise = false; // error out instead of divergent delivery
    int max_rounds = 100;
    int publish_retries = 3;
};

// Accumulated per-link state between requests.
struct LinkState {
    std::deque<uint8_t> alice_buffer;
    std::deque<uint8_t> bob_buffer;
    uint64_t round_counter = 0;
    LinkSchedule schedule;
};

// Runs protocol rounds until bits_needed accumulate (or fails). Pure of any
// bus concern so it is directly testable. Does not wait out the latency.
ModelingResult fulfill(LinkState& state, const LinkDecl& link, size_t link_index,
                       const ModelingRequest& req, const EngineOptions& opts,
                       const ProtocolRegistry& registry, EventLog* log);

// The engine service: consumes modeling requests from the reserved routing
// key, one logical worker per link, results published after the scaled
// simulated latency has elapsed in wall-clock time.
class EngineService {
   public:
    EngineService(NetworkConfig config, EngineOptions opts);
    ~EngineService();

    EngineService(const EngineService&) = delete;
    EngineService& operator=(const EngineService&) = delete;

    // Connects to the bus (defaults to the config's bus_endpoint).
    void start();
    void start(const std::string& bus_host, uint16_t bus_port);
    void stop();

    EventLog& log() { return *log_; }

    static constexpr const char* kRoutingKey = "engine";

   private:
    struct LinkWorker {
        std::thread thread;
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<ModelingRequest> queue;
        LinkState state;
    };

    void dispatch_loop();
    void worker_loop(size_t link_index);
    void publish_result(const ModelingResult& res);
    void publish_error(const ModelingRequest& req, const std::string& error);

    NetworkConfig config_;
    EngineOptions opts_;
    ProtocolRegistry registry_;
    std::unique_ptr<EventLog> log_;
    BusClient bus_;
    std::atomic<bool> running_{false};

    std::mutex inbox_mutex_;
    std::condition_variable inbox_cv_;
    std::deque<ModelingRequest> inbox_;
    std::thread dispatcher_;

    std::vector<std::unique_ptr<LinkWorker>> workers_;  // one per config link
};

}  // namespace qdnet
