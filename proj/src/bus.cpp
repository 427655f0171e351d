#include "qdnet/bus.hpp"

#include <chrono>

#include "qdnet/util.hpp"

namespace qdnet {

BusClient::~BusClient() { close(); }

void BusClient::connect(const std::string& host, uint16_t port) {
    fd_ = tcp_connect(host, port);
    running_ = true;
    reader_ = std::thread([this] { reader_loop(); });
}

void BusClient::close() {
    if (!running_.exchange(false)) return;
    tcp_close(fd_);
    if (reader_.joinable()) reader_.join();
    fd_ = -1;
    std::lock_guard lock(ack_mutex_);
    for (auto& [id, p] : pending_acks_) {
        p.done = true;
        p.error = "connection closed";
    }
    ack_cv_.notify_all();
}

void BusClient::reader_loop() {
    try {
        while (running_) {
            auto frame = read_frame(fd_);
            if (!frame) break;
            std::string op = frame->value("op", "");
            if (op == "ack") {
                std::lock_guard lock(ack_mutex_);
                auto it = pending_acks_.find(frame->value("message_id", ""));
                if (it != pending_acks_.end()) {
                    it->second.done = true;
                    if (frame->value("status", "ok") != "ok")
                        it->second.error = frame->value("error", "broker error");
                }
                ack_cv_.notify_all();
            } else if (op == "publish") {
                BusMessage msg;
                msg.routing_key = frame->value("routing_key", "");
                msg.kind = frame->value("kind", "");
                msg.message_id = frame->value("message_id", "");
                msg.sent_at = frame->value("sent_at", "");
                if (frame->contains("payload")) msg.payload = (*frame)["payload"];
                Handler handler;
                {
                    std::lock_guard lock(handler_mutex_);
                    auto it = handlers_.find(msg.routing_key);
                    if (it != handlers_.end()) handler = it->second;
                }
                if (handler) handler(msg);
            }
        }
    } catch (const std::exception&) {
        // disconnect; pending publishes are failed below
    }
    std::lock_guard lock(ack_mutex_);
    for (auto& [id, p] : pending_acks_) {
        if (!p.done) {
            p.done = true;
            p.error = "connection lost";
        }
    }
    ack_cv_.notify_all();
}

std::string BusClient::send_and_wait(const json& frame) {
    std::string msg_id = frame.value("message_id", "");
    {
        std::lock_guard lock(ack_mutex_);
        pending_acks_[msg_id] = {};
    }
    {
        std::lock_guard lock(write_mutex_);
        if (fd_ < 0 || !running_) throw std::runtime_error("bus disconnected");
        write_frame(fd_, frame);
    }
    std::unique_lock lock(ack_mutex_);
    bool ok = ack_cv_.wait_for(lock, std::chrono::seconds(30), [&] {
        return pending_acks_[msg_id].done;
    });
    std::string error = ok ? pending_acks_[msg_id].error : "broker ack timeout";
    pending_acks_.erase(msg_id);
    if (!error.empty()) throw std::runtime_error(error);
    return msg_id;
}

void BusClient::publish(const std::string& routing_key, const std::string& kind,
                        const json& payload, const std::string& message_id) {
    json frame = {{"op", "publish"},
                  {"routing_key", routing_key},
                  {"kind", kind},
                  {"message_id", message_id.empty() ? make_uuid() : message_id},
                  {"payload", payload},
                  {"sent_at", iso_timestamp()}};
    send_and_wait(frame);
}

void BusClient::subscribe(const std::string& routing_key, Handler handler) {
    {
        std::lock_guard lock(handler_mutex_);
        handlers_[routing_key] = std::move(handler);
    }
    json frame = {{"op", "subscribe"},
                  {"routing_key", routing_key},
                  {"message_id", make_uuid()},
                  {"sent_at", iso_timestamp()}};
    send_and_wait(frame);
}

}  // namespace qdnet
