#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "qdnet/frame.hpp"

namespace qdnet {

struct BusMessage {
    std::string routing_key;
    std::string kind;  // "modeling_request" | "modeling_result"
    std::string message_id;
    std::string sent_at;
    json payload;
};

// Client endpoint of the broker. publish() blocks until the broker acks;
// subscription handlers run on the background reader thread and must not
// publish on the same client (hand work to another thread instead). Safe to
// share across threads.
class BusClient {
   public:
    using Handler = std::function<void(const BusMessage&)>;

    BusClient() = default;
    ~BusClient();

    BusClient(const BusClient&) = delete;
    BusClient& operator=(const BusClient&) = delete;

    void connect(const std::string& host, uint16_t port);
    void close();
    bool connected() const { return fd_ >= 0 && running_; }

    // Throws std::runtime_error if disconnected or the broker rejects the
    // message (e.g. oversized payload).
    void publish(const std::string& routing_key, const std::string& kind,
                 const json& payload, const std::string& message_id = "");

    void subscribe(const std::string& routing_key, Handler handler);

   private:
    void reader_loop();
    std::string send_and_wait(const json& frame);

    int fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread reader_;

    std::mutex write_mutex_;

    std::mutex ack_mutex_;
    std::condition_variable ack_cv_;
    struct Pending {
        bool done = false;
        std::string error;
    };
    std::map<std::string, Pending> pending_acks_;

    std::mutex handler_mutex_;
    std::map<std::string, Handler> handlers_;
};

}  // namespace qdnet
