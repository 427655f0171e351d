#include "qdnet/node.hpp"

#include <httplib.h>

#include <chrono>

#include "qdnet/util.hpp"

namespace qdnet {

namespace {

void send_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(json{{"message", message}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& body) {
    res.set_content(body.dump(), "application/json");
}

}  // namespace

NodeService::NodeService(NetworkConfig config, std::string node_name,
                         NodeOptions opts)
    : config_(std::move(config)),
      name_(std::move(node_name)),
      opts_(opts),
      store_(opts.ttl_s),
      log_(opts.log_path) {
    self_ = config_.find_node(name_);
    if (!self_)
        throw ConfigError(ConfigErrorKind::unknown_endpoint,
                          "node '" + name_ + "' not declared in the config");
    api_port_ = self_->api_port;
    relay_port_ = opts_.relay_port ? opts_.relay_port
                                   : static_cast<uint16_t>(api_port_ + 1);
    http_ = std::make_unique<httplib::Server>();
    // httplib's default on Linux is SO_REUSEPORT only; use SO_REUSEADDR so a
    // restart can rebind the port past TIME_WAIT remnants of the previous
    // instance, without silently sharing a still-live listener.
    http_->set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    setup_routes();
}

NodeService::~NodeService() { stop(); }

void NodeService::start() {
    bus_.connect(config_.bus_host, config_.bus_port);
    bus_.subscribe(name_, [this](const BusMessage& msg) { on_bus_result(msg); });

    relay_listen_fd_ = tcp_listen("0.0.0.0", relay_port_);
    running_ = true;
    relay_thread_ = std::thread([this] { relay_loop(); });
    purge_thread_ = std::thread([this] {
        while (running_) {
            store_.purge();
            sleep_s(0.25);
        }
    });

    if (!http_->bind_to_port("0.0.0.0", api_port_))
        throw std::runtime_error("node '" + name_ + "' cannot bind api port " +
                                 std::to_string(api_port_));
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    log_.record("node_started", {{"node", name_},
                                 {"api_port", api_port_},
                                 {"relay_port", relay_port_}});
}

void NodeService::stop() {
    if (!running_.exchange(false)) return;
    http_->stop();
    tcp_close(relay_listen_fd_);
    relay_listen_fd_ = -1;
    if (http_thread_.joinable()) http_thread_.join();
    if (relay_thread_.joinable()) relay_thread_.join();
    if (purge_thread_.joinable()) purge_thread_.join();
    bus_.close();
    std::lock_guard lock(pending_mutex_);
    for (auto& [id, p] : pending_) {
        p.done = true;
        p.result = {{"status", "error"}, {"error", "node shutting down"}};
    }
    pending_cv_.notify_all();
}

void NodeService::setup_routes() {
    http_->Get(R"(/api/v1/keys/([^/]+)/status)",
               [this](const httplib::Request& req, httplib::Response& res) {
                   const std::string slave_sae = req.matches[1];
                   const NodeDecl* peer = config_.find_node_by_sae(slave_sae);
                   if (!peer || peer->name == name_) {
                       send_error(res, 404, "unknown slave SAE '" + slave_sae + "'");
                       return;
                   }
                   json body = {
                       {"source_KME_ID", self_->sae_id},
                       {"target_KME_ID", peer->sae_id},
                       {"master_SAE_ID", self_->sae_id},
                       {"slave_SAE_ID", peer->sae_id},
                       {"key_size", opts_.default_key_size_bits},
                       {"stored_key_count", store_.count_for_peer(slave_sae)},
                       {"max_key_per_request", opts_.max_key_per_request},
                       {"max_key_size", opts_.max_key_size_bits},
                       {"min_key_size", opts_.min_key_size_bits}};
                   send_json(res, body);
               });

    auto enc_keys = [this](const httplib::Request& req, httplib::Response& res) {
        const std::string slave_sae = req.matches[1];
        const NodeDecl* peer = config_.find_node_by_sae(slave_sae);
        if (!peer || peer->name == name_) {
            send_error(res, 404, "unknown slave SAE '" + slave_sae + "'");
            return;
        }
        if (!config_.adjacent(name_, peer->name)) {
            send_error(res, 400,
                       "node '" + name_ + "' has no QKD link with '" +
                           peer->name + "'; use a trusted-node relay");
            return;
        }
        int number = 1;
        int size = opts_.default_key_size_bits;
        try {
            if (req.has_param("number")) number = std::stoi(req.get_param_value("number"));
            if (req.has_param("size")) size = std::stoi(req.get_param_value("size"));
            if (!req.body.empty()) {
                json body = json::parse(req.body);
                number = body.value("number", number);
                size = body.value("size", size);
            }
        } catch (const std::exception&) {
            send_error(res, 400, "malformed request parameters");
            return;
        }
        if (number < 1 || number > opts_.max_key_per_request) {
            send_error(res, 400,
                       "number must be in [1," +
                           std::to_string(opts_.max_key_per_request) + "]");
            return;
        }
        if (size < opts_.min_key_size_bits || size > opts_.max_key_size_bits ||
            size % 8 != 0) {
            send_error(res, 400,
                       "size must be a multiple of 8 in [" +
                           std::to_string(opts_.min_key_size_bits) + "," +
                           std::to_string(opts_.max_key_size_bits) + "]");
            return;
        }

        ModelingRequest mreq;
        mreq.request_id = make_uuid();
        mreq.initiator = name_;
        mreq.peer = peer->name;
        mreq.bits_needed = static_cast<uint64_t>(number) * size;
        {
            std::lock_guard lock(pending_mutex_);
            pending_[mreq.request_id] = {};
        }
        log_.record("key_requested", {{"request_id", mreq.request_id},
                                      {"peer", peer->name},
                                      {"bits", mreq.bits_needed}});
        try {
            bus_.publish(EngineService::kRoutingKey, "modeling_request",
                         mreq.to_json(), mreq.request_id);
        } catch (const std::exception& e) {
            std::lock_guard lock(pending_mutex_);
            pending_.erase(mreq.request_id);
            send_error(res, 503, std::string("modeling engine unreachable: ") +
                                     e.what());
            return;
        }

        json result = wait_for_result(mreq.request_id);
        if (result.is_null()) {
            send_error(res, 503, "modeling engine timed out");
            return;
        }
        if (result.value("status", "") == "error") {
            send_error(res, 503, result.value("error", "modeling failed"));
            return;
        }
        json container = {{"keys", json::array({json{
                              {"key_ID", result.value("key_id", "")},
                              {"key", result.value("key", "")}}})}};
        send_json(res, container);
    };
    http_->Get(R"(/api/v1/keys/([^/]+)/enc_keys)", enc_keys);
    http_->Post(R"(/api/v1/keys/([^/]+)/enc_keys)", enc_keys);

    auto dec_keys = [this](const httplib::Request& req, httplib::Response& res) {
        const std::string master_sae = req.matches[1];
        std::vector<std::string> ids;
        if (req.has_param("key_ID")) ids.push_back(req.get_param_value("key_ID"));
        if (!req.body.empty()) {
            try {
                json body = json::parse(req.body);
                for (const auto& entry : body.value("key_IDs", json::array()))
                    ids.push_back(entry.value("key_ID", ""));
            } catch (const std::exception&) {
                send_error(res, 400, "malformed key_IDs body");
                return;
            }
        }
        if (ids.empty()) {
            send_error(res, 400, "no key_ID supplied");
            return;
        }
        json keys = json::array();
        for (const auto& id : ids) {
            auto stored = store_.get(id);
            if (!stored || stored->peer_sae != master_sae) {
                send_error(res, 400, "key not found or expired: " + id);
                return;
            }
            keys.push_back(
                {{"key_ID", id}, {"key", base64_encode(stored->material)}});
        }
        send_json(res, json{{"keys", keys}});
    };
    http_->Get(R"(/api/v1/keys/([^/]+)/dec_keys)", dec_keys);
    http_->Post(R"(/api/v1/keys/([^/]+)/dec_keys)", dec_keys);
}

void NodeService::on_bus_result(const BusMessage& msg) {
    if (msg.kind != "modeling_result") return;
    const json& p = msg.payload;
    std::string request_id = p.value("request_id", "");
    std::string status = p.value("status", "");
    if (status != "error") {
        std::string key_id = p.value("key_id", "");
        std::string initiator = p.value("initiator", "");
        std::string peer = p.value("peer", "");
        std::string other = initiator == name_ ? peer : initiator;
        const NodeDecl* other_node = config_.find_node(other);
        StoredKey key;
        key.key_id = key_id;
        key.material = base64_decode(p.value("key", ""));
        key.peer_sae = other_node ? other_node->sae_id : other;
        key.stored_at = monotonic_s();
        key.ttl_s = opts_.ttl_s;
        size_t bits = key.material.size() * 8;
        if (!store_.insert(std::move(key))) {
            log_.record("duplicate_key_rejected", {{"key_id", key_id}}, "error");
        } else {
            log_.record("key_stored", {{"key_id", key_id},
                                       {"peer", other},
                                       {"bits", bits},
                                       {"status", status}});
        }
    }
    std::lock_guard lock(pending_mutex_);
    auto it = pending_.find(request_id);
    if (it != pending_.end()) {
        it->second.done = true;
        it->second.result = p;
        pending_cv_.notify_all();
    }
}

json NodeService::wait_for_result(const std::string& request_id) {
    std::unique_lock lock(pending_mutex_);
    bool ok = pending_cv_.wait_for(
        lock, std::chrono::duration<double>(opts_.engine_timeout_s),
        [&] { return pending_[request_id].done; });
    json result = ok ? pending_[request_id].result : json();
    pending_.erase(request_id);
    return result;
}

void NodeService::relay_loop() {
    while (running_) {
        int fd = tcp_accept(relay_listen_fd_);
        if (fd < 0) return;
        try {
            for (;;) {
                auto frame = read_frame(fd);
                if (!frame) break;
                write_frame(fd, handle_relay_frame(*frame));
            }
        } catch (const std::exception&) {
            // peer hung up
        }
        tcp_close(fd);
    }
}

json NodeService::handle_relay_frame(const json& frame) {
    auto error = [](const std::string& message) {
        return json{{"op", "ack"}, {"status", "error"}, {"message", message}};
    };
    std::string kind = frame.value("kind", "");
    const json payload = frame.value("payload", json::object());
    try {
        if (kind == "relay_hop") {
            // Trusted-node hop: strip the upstream pad, apply the downstream one.
            auto up = store_.get(payload.value("upstream_key_id", ""));
            auto down = store_.get(payload.value("downstream_key_id", ""));
            if (!up) return error("upstream hop key unknown or expired");
            if (!down) return error("downstream hop key unknown or expired");
            auto ct = base64_decode(payload.value("ciphertext", ""));
            auto out = xor_bytes(xor_bytes(ct, up->material), down->material);
            log_.record("relay_hop", {{"upstream_key_id", up->key_id},
                                      {"downstream_key_id", down->key_id},
                                      {"bytes", out.size()}});
            return json{{"op", "ack"},
                        {"kind", "relay_hop_result"},
                        {"status", "ok"},
                        {"payload", {{"ciphertext", base64_encode(out)}}}};
        }
        if (kind == "relay_store") {
            auto down = store_.get(payload.value("downstream_key_id", ""));
            if (!down) return error("downstream hop key unknown or expired");
            auto ct = base64_decode(payload.value("ciphertext", ""));
            auto plain = xor_bytes(ct, down->material);
            std::string key_id = payload.value("key_id", "");
            std::string origin = payload.value("origin_sae", "");
            if (!store_.insert(key_id, std::move(plain), origin))
                return error("duplicate key_id '" + key_id + "'");
            log_.record("relay_key_stored",
                        {{"key_id", key_id}, {"origin_sae", origin}});
            return json{{"op", "ack"}, {"status", "ok"}};
        }
    } catch (const std::exception& e) {
        return error(e.what());
    }
    return error("unknown relay frame kind '" + kind + "'");
}

}  // namespace qdnet
