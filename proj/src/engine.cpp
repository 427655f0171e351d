#include "qdnet/engine.hpp"

#include <algorithm>

#include "qdnet/util.hpp"

namespace qdnet {

json ModelingRequest::to_json() const {
    return {{"request_id", request_id},
            {"initiator", initiator},
            {"peer", peer},
            {"bits_needed", bits_needed}};
}

ModelingRequest ModelingRequest::from_json(const json& j) {
    ModelingRequest req;
    req.request_id = j.value("request_id", "");
    req.initiator = j.value("initiator", "");
    req.peer = j.value("peer", "");
    req.bits_needed = j.value("bits_needed", 0ULL);
    return req;
}

double LinkSchedule::schedule(double now, double duration_s,
                              double time_scale) {
    double completion = std::max(now, busy_until_) + duration_s / time_scale;
    busy_until_ = completion;
    return completion;
}

size_t validate_request(const ModelingRequest& req,
                        const NetworkConfig& config) {
    if (req.bits_needed < 1)
        throw RequestError(RequestErrorKind::invalid_request,
                           "bits_needed must be >= 1");
    if (req.initiator == req.peer)
        throw RequestError(RequestErrorKind::invalid_request,
                           "initiator and peer must differ");
    for (const auto& name : {req.initiator, req.peer}) {
        if (!config.find_node(name))
            throw RequestError(RequestErrorKind::unknown_node,
                               "unknown node '" + name + "'");
    }
    int idx = config.link_index(req.initiator, req.peer);
    if (idx < 0)
        throw RequestError(RequestErrorKind::not_adjacent,
                           "nodes '" + req.initiator + "' and '" + req.peer +
                               "' are not adjacent");
    return static_cast<size_t>(idx);
}

ModelingResult fulfill(LinkState& state, const LinkDecl& link,
                       size_t link_index, const ModelingRequest& req,
                       const EngineOptions& opts,
                       const ProtocolRegistry& registry, EventLog* log) {
    ModelingResult res;
    res.request_id = req.request_id;
    res.key_id = req.request_id;  // engine-minted key id follows the request id
    res.initiator = req.initiator;
    res.peer = req.peer;

    const ProtocolFn* protocol = registry.find(protocol_name(link.protocol));
    if (!protocol) {
        res.status = "error";
        res.error = "no protocol registered for " + protocol_name(link.protocol);
        return res;
    }

    if (!opts.buffering) {
        state.alice_buffer.clear();
        state.bob_buffer.clear();
    }

    LinkPhysics phys = LinkPhysics::from_link(link);
    bool demo_release = link.eve.has_value() && !opts.strict_compromise;

    int rounds = 0;
    double qber_weighted = 0.0;
    uint64_t qber_weight = 0;
    while (state.alice_buffer.size() < req.bits_needed) {
        if (rounds >= opts.max_rounds) {
            res.status = "error";
            res.error = "protocol aborted: QBER over threshold for " +
                        std::to_string(opts.max_rounds) + " rounds on " +
                        link.id();
            if (log)
                log->record("rounds_exhausted",
                            {{"request_id", req.request_id},
                             {"link", link.id()},
                             {"detail", res.error}},
                            "error");
            return res;
        }
        uint64_t seed =
            mix_seed(opts.seed, static_cast<uint64_t>(link_index),
                     state.round_counter);
        ++state.round_counter;
        RoundOutcome out = (*protocol)(link.phys, phys, seed, demo_release);
        ++rounds;
        res.simulated_duration_s += out.simulated_duration_s;
        res.channel_uses += out.channel_uses;
        if (log)
            log->record("round_completed",
                        {{"request_id", req.request_id},
                         {"link", link.id()},
                         {"qber", out.qber},
                         {"sifted_bits", out.alice_sifted.size()},
                         {"secure_bits", out.secure_bits.size()},
                         {"aborted", out.aborted},
                         {"compromised", out.compromised_divergent}});
        qber_weighted +=
            out.qber * static_cast<double>(out.alice_sifted.size());
        qber_weight += out.alice_sifted.size();
        if (out.aborted) continue;
        state.alice_buffer.insert(state.alice_buffer.end(),
                                  out.secure_bits.begin(),
                                  out.secure_bits.end());
        state.bob_buffer.insert(state.bob_buffer.end(),
                                out.peer_secure_bits.begin(),
                                out.peer_secure_bits.end());
        res.bits_generated += out.secure_bits.size();
    }
    res.qber = qber_weight > 0 ? qber_weighted / static_cast<double>(qber_weight)
                               : 0.0;

    Bits alice_bits(state.alice_buffer.begin(),
                    state.alice_buffer.begin() +
                        static_cast<long>(req.bits_needed));
    Bits bob_bits(state.bob_buffer.begin(),
                  state.bob_buffer.begin() + static_cast<long>(req.bits_needed));
    state.alice_buffer.erase(state.alice_buffer.begin(),
                             state.alice_buffer.begin() +
                                 static_cast<long>(req.bits_needed));
    state.bob_buffer.erase(state.bob_buffer.begin(),
                           state.bob_buffer.begin() +
                               static_cast<long>(req.bits_needed));

    res.key_material = pack_bits(alice_bits);
    res.peer_key_material = pack_bits(bob_bits);
    res.status = alice_bits == bob_bits ? "ok" : "compromised";
    if (!opts.buffering) {
        state.alice_buffer.clear();
        state.bob_buffer.clear();
    }
    return res;
}

EngineService::EngineService(NetworkConfig config, EngineOptions opts)
    : config_(std::move(config)),
      opts_(std::move(opts)),
      registry_(ProtocolRegistry::with_builtins()),
      log_(std::make_unique<EventLog>(opts_.log_path)) {
    if (opts_.time_scale <= 0) opts_.time_scale = config_.time_scale;
    for (size_t i = 0; i < config_.links.size(); ++i)
        workers_.push_back(std::make_unique<LinkWorker>());
}

EngineService::~EngineService() { stop(); }

void EngineService::start() { start(config_.bus_host, config_.bus_port); }

void EngineService::start(const std::string& bus_host, uint16_t bus_port) {
    bus_.connect(bus_host, bus_port);
    running_ = true;
    bus_.subscribe(kRoutingKey, [this](const BusMessage& msg) {
        if (msg.kind != "modeling_request") return;
        ModelingRequest req = ModelingRequest::from_json(msg.payload);
        req.received_at = iso_timestamp();
        log_->record("received", {{"request_id", req.request_id},
                                  {"initiator", req.initiator},
                                  {"peer", req.peer},
                                  {"bits_needed", req.bits_needed}});
        std::lock_guard lock(inbox_mutex_);
        inbox_.push_back(std::move(req));
        inbox_cv_.notify_one();
    });
    dispatcher_ = std::thread([this] { dispatch_loop(); });
    for (size_t i = 0; i < workers_.size(); ++i)
        workers_[i]->thread = std::thread([this, i] { worker_loop(i); });
    log_->record("engine_started", {{"links", config_.links.size()},
                                    {"time_scale", opts_.time_scale}});
}

void EngineService::stop() {
    if (!running_.exchange(false)) return;
    inbox_cv_.notify_all();
    for (auto& w : workers_) w->cv.notify_all();
    if (dispatcher_.joinable()) dispatcher_.join();
    for (auto& w : workers_)
        if (w->thread.joinable()) w->thread.join();
    bus_.close();
}

void EngineService::dispatch_loop() {
    while (running_) {
        ModelingRequest req;
        {
            std::unique_lock lock(inbox_mutex_);
            inbox_cv_.wait(lock, [this] { return !inbox_.empty() || !running_; });
            if (!running_) return;
            req = std::move(inbox_.front());
            inbox_.pop_front();
        }
        try {
            size_t link_index = validate_request(req, config_);
            log_->record("validated",
                         {{"request_id", req.request_id},
                          {"link", config_.links[link_index].id()}});
            auto& worker = *workers_[link_index];
            std::lock_guard lock(worker.mutex);
            worker.queue.push_back(std::move(req));
            worker.cv.notify_one();
        } catch (const RequestError& e) {
            log_->record("request_rejected",
                         {{"request_id", req.request_id}, {"detail", e.what()}},
                         "error");
            publish_error(req, e.what());
        }
    }
}

void EngineService::worker_loop(size_t link_index) {
    auto& worker = *workers_[link_index];
    const LinkDecl& link = config_.links[link_index];
    while (running_) {
        ModelingRequest req;
        {
            std::unique_lock lock(worker.mutex);
            worker.cv.wait(lock,
                           [&] { return !worker.queue.empty() || !running_; });
            if (!running_) return;
            req = std::move(worker.queue.front());
            worker.queue.pop_front();
        }
        ModelingResult res = fulfill(worker.state, link, link_index, req, opts_,
                                     registry_, log_.get());
        if (res.status == "error") {
            publish_error(req, res.error);
            continue;
        }
        double completion = worker.state.schedule.schedule(
            monotonic_s(), res.simulated_duration_s, opts_.time_scale);
        log_->record("scheduled", {{"request_id", req.request_id},
                                   {"link", link.id()},
                                   {"duration_s", res.simulated_duration_s},
                                   {"completion_in_s",
                                    std::max(0.0, completion - monotonic_s())}});
        // Wall-clock latency enforcement: results never leave early.
        double wait = completion - monotonic_s();
        while (wait > 0 && running_) {
            sleep_s(std::min(wait, 0.05));
            wait = completion - monotonic_s();
        }
        if (!running_) return;
        publish_result(res);
        log_->record("published", {{"request_id", req.request_id},
                                   {"key_id", res.key_id},
                                   {"link", link.id()},
                                   {"status", res.status},
                                   {"qber", res.qber},
                                   {"duration_s", res.simulated_duration_s},
                                   {"channel_uses", res.channel_uses},
                                   {"bits_generated", res.bits_generated},
                                   {"key_bits", res.key_material.size() * 8}});
    }
}

void EngineService::publish_result(const ModelingResult& res) {
    const NodeDecl* initiator = config_.find_node(res.initiator);
    const NodeDecl* peer = config_.find_node(res.peer);
    auto payload_for = [&](const std::vector<uint8_t>& material) {
        return json{{"request_id", res.request_id},
                    {"key_id", res.key_id},
                    {"status", res.status},
                    {"qber", res.qber},
                    {"simulated_duration_s", res.simulated_duration_s},
                    {"channel_uses", res.channel_uses},
                    {"bits_generated", res.bits_generated},
                    {"initiator", res.initiator},
                    {"peer", res.peer},
                    {"key", base64_encode(material)}};
    };
    struct Target {
        std::string key;
        json payload;
    };
    std::vector<Target> targets = {
        {initiator->name, payload_for(res.key_material)},
        {peer->name, payload_for(res.peer_key_material)}};
    for (auto& t : targets) {
        for (int attempt = 0;; ++attempt) {
            try {
                bus_.publish(t.key, "modeling_result", t.payload);
                break;
            } catch (const std::exception& e) {
                if (attempt + 1 >= opts_.publish_retries) {
                    log_->record("publish_failed",
                                 {{"request_id", res.request_id},
                                  {"routing_key", t.key},
                                  {"detail", e.what()}},
                                 "error");
                    break;
                }
                sleep_s(0.1 * (attempt + 1));
            }
        }
    }
}

void EngineService::publish_error(const ModelingRequest& req,
                                  const std::string& error) {
    json payload = {{"request_id", req.request_id},
                    {"key_id", req.request_id},
                    {"status", "error"},
                    {"error", error},
                    {"initiator", req.initiator},
                    {"peer", req.peer}};
    try {
        if (config_.find_node(req.initiator))
            bus_.publish(req.initiator, "modeling_result", payload);
    } catch (const std::exception& e) {
        log_->record("publish_failed",
                     {{"request_id", req.request_id}, {"detail", e.what()}},
                     "error");
    }
}

}  // namespace qdnet
