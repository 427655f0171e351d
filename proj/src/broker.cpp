#include "qdnet/broker.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <algorithm>
#include <fstream>

#include "qdnet/util.hpp"

namespace qdnet {

Broker::Broker(Options opts) : opts_(std::move(opts)) {}

Broker::~Broker() { stop(); }

void Broker::start() {
    listen_fd_ = tcp_listen(opts_.bind_host, opts_.port);
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    sweep_thread_ = std::thread([this] {
        while (running_) {
            sweep_retained();
            sleep_s(0.5);
        }
    });
}

void Broker::stop() {
    if (!running_.exchange(false)) return;
    tcp_close(listen_fd_);
    listen_fd_ = -1;
    {
        std::lock_guard lock(state_mutex_);
        for (auto& conn : connections_) tcp_close(conn->fd);
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    if (sweep_thread_.joinable()) sweep_thread_.join();
    for (auto& w : workers_)
        if (w.joinable()) w.join();
    workers_.clear();
    std::lock_guard lock(state_mutex_);
    subscribers_.clear();
    retained_.clear();
    connections_.clear();
}

void Broker::accept_loop() {
    while (running_) {
        int fd = tcp_accept(listen_fd_);
        if (fd < 0) break;
        auto conn = std::make_shared<Connection>();
        conn->fd = fd;
        {
            std::lock_guard lock(state_mutex_);
            connections_.push_back(conn);
            workers_.emplace_back([this, conn] { serve(conn); });
        }
    }
}

void Broker::serve(std::shared_ptr<Connection> conn) {
    try {
        for (;;) {
            auto frame = read_frame(conn->fd);
            if (!frame) break;
            std::string op = frame->value("op", "");
            if (op == "publish") {
                handle_publish(*conn, *frame);
            } else if (op == "subscribe") {
                handle_subscribe(conn, *frame);
            } else {
                json err = {{"op", "ack"},
                            {"message_id", frame->value("message_id", "")},
                            {"status", "error"},
                            {"error", "unknown op '" + op + "'"}};
                deliver(*conn, err);
            }
        }
    } catch (const std::exception&) {
        // connection torn down; fall through to cleanup
    }
    std::lock_guard lock(state_mutex_);
    for (auto& key : conn->subscriptions) {
        auto& subs = subscribers_[key];
        subs.erase(std::remove(subs.begin(), subs.end(), conn), subs.end());
    }
    tcp_close(conn->fd);
    conn->fd = -1;
}

void Broker::handle_publish(Connection& conn, const json& frame) {
    std::string key = frame.value("routing_key", "");
    std::string msg_id = frame.value("message_id", "");
    std::string payload_text =
        frame.contains("payload") ? frame["payload"].dump() : "";
    if (key.empty()) {
        deliver(conn, {{"op", "ack"},
                       {"message_id", msg_id},
                       {"status", "error"},
                       {"error", "missing routing_key"}});
        return;
    }
    if (payload_text.size() > kMaxPayloadBytes) {
        deliver(conn, {{"op", "ack"},
                       {"message_id", msg_id},
                       {"status", "error"},
                       {"error", "payload exceeds 1 MiB"}});
        return;
    }
    capture(frame);

    std::vector<std::shared_ptr<Connection>> targets;
    {
        std::lock_guard lock(state_mutex_);
        auto it = subscribers_.find(key);
        if (it != subscribers_.end()) targets = it->second;
        if (targets.empty()) {
            retained_[key].push_back(
                {frame, monotonic_s() + opts_.retention_ttl_s});
        }
    }
    for (auto& target : targets) deliver(*target, frame);
    deliver(conn, {{"op", "ack"}, {"message_id", msg_id}, {"status", "ok"}});
}

void Broker::handle_subscribe(const std::shared_ptr<Connection>& conn,
                              const json& frame) {
    std::string key = frame.value("routing_key", "");
    std::string msg_id = frame.value("message_id", "");
    std::deque<Retained> backlog;
    {
        std::lock_guard lock(state_mutex_);
        auto& subs = subscribers_[key];
        if (std::find(subs.begin(), subs.end(), conn) == subs.end())
            subs.push_back(conn);
        conn->subscriptions.insert(key);
        auto it = retained_.find(key);
        if (it != retained_.end()) {
            backlog = std::move(it->second);
            retained_.erase(it);
        }
    }
    deliver(*conn, {{"op", "ack"}, {"message_id", msg_id}, {"status", "ok"}});
    double now = monotonic_s();
    for (auto& r : backlog) {
        if (r.deadline >= now) deliver(*conn, r.frame);
    }
}

void Broker::sweep_retained() {
    double now = monotonic_s();
    std::lock_guard lock(state_mutex_);
    for (auto& [key, queue] : retained_) {
        while (!queue.empty() && queue.front().deadline < now) queue.pop_front();
    }
}

void Broker::deliver(Connection& conn, const json& frame) {
    std::lock_guard lock(conn.write_mutex);
    if (conn.fd < 0) return;
    try {
        write_frame(conn.fd, frame);
    } catch (const std::exception&) {
        // subscriber went away; its serve loop will clean up
    }
}

void Broker::capture(const json& frame) {
    if (opts_.capture_path.empty()) return;
    std::lock_guard lock(capture_mutex_);
    std::ofstream out(opts_.capture_path, std::ios::app);
    out << frame.dump() << "\n";
}

}  // namespace qdnet
