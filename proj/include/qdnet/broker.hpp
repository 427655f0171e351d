#pragma once

#include <atomic>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "qdnet/frame.hpp"

namespace qdnet {

// Minimal pub/sub broker: named routing keys, fanout per key, volatile
// retained queue for late subscribers. Keys are created on first use.
class Broker {
   public:
    struct Options {
        std::string bind_host = "127.0.0.1";
        uint16_t port = 0;  // 0 picks an ephemeral port
        double retention_ttl_s = 60.0;
        std::string capture_path;  // append every published frame when set
    };

    explicit Broker(Options opts);
    ~Broker();

    Broker(const Broker&) = delete;
    Broker& operator=(const Broker&) = delete;

    void start();  // throws on bind failure
    void stop();
    uint16_t port() const { return port_; }

   private:
    struct Connection {
        int fd = -1;
        std::mutex write_mutex;
        std::set<std::string> subscriptions;
    };
    struct Retained {
        json frame;
        double deadline;
    };

    void accept_loop();
    void serve(std::shared_ptr<Connection> conn);
    void handle_publish(Connection& conn, const json& frame);
    void handle_subscribe(const std::shared_ptr<Connection>& conn,
                          const json& frame);
    void sweep_retained();
    void deliver(Connection& conn, const json& frame);
    void capture(const json& frame);

    Options opts_;
    uint16_t port_ = 0;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::thread sweep_thread_;
    std::vector<std::thread> workers_;

    std::mutex state_mutex_;
    std::map<std::string, std::vector<std::shared_ptr<Connection>>> subscribers_;
    std::map<std::string, std::deque<Retained>> retained_;
    std::vector<std::shared_ptr<Connection>> connections_;

    std::mutex capture_mutex_;
};

}  // namespace qdnet
