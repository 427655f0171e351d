#include "qdnet/deploy.hpp"

#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>

#include "qdnet/frame.hpp"
#include "qdnet/util.hpp"

namespace qdnet {

LocalDeployment::LocalDeployment(NetworkConfig config, Options opts)
    : config_(std::move(config)), opts_(std::move(opts)) {}

LocalDeployment::~LocalDeployment() { stop(); }

namespace {

// Each node needs its api port and the adjacent relay port (api + 1).
// Ports are drawn from below the kernel's ephemeral range so that outbound
// connections (probes, bus clients) cannot steal a chosen port between
// assignment and bind.
uint16_t pick_port_pair(std::set<uint16_t>& used) {
    static std::mt19937_64 rng(std::random_device{}());
    std::uniform_int_distribution<int> dist(20000, 29998);
    for (int attempt = 0; attempt < 500; ++attempt) {
        uint16_t p = static_cast<uint16_t>(dist(rng) & ~1);  // even: p, p+1
        if (used.count(p) || used.count(static_cast<uint16_t>(p + 1))) continue;
        bool free = true;
        for (uint16_t candidate : {p, static_cast<uint16_t>(p + 1)}) {
            try {
                int fd = tcp_listen("127.0.0.1", candidate);
                tcp_close(fd);
            } catch (const std::exception&) {
                free = false;
                break;
            }
        }
        if (!free) continue;
        used.insert(p);
        used.insert(static_cast<uint16_t>(p + 1));
        return p;
    }
    throw std::runtime_error("no free port pair available");
}

}  // namespace

NetworkConfig LocalDeployment::assign_ports(NetworkConfig config) {
    std::set<uint16_t> used;
    config.bus_host = "127.0.0.1";
    config.bus_port = pick_port_pair(used);
    for (auto& node : config.nodes) node.api_port = pick_port_pair(used);
    return config;
}

void LocalDeployment::start() {
    Broker::Options bopts;
    bopts.bind_host = config_.bus_host;
    bopts.port = config_.bus_port;
    bopts.capture_path = opts_.broker_capture_path;
    broker_ = std::make_unique<Broker>(bopts);
    broker_->start();
    config_.bus_port = broker_->port();

    if (opts_.engine.log_path.empty()) {
        opts_.engine.log_path =
            (std::filesystem::temp_directory_path() /
             ("qdnet-engine-" + make_uuid() + ".jsonl"))
                .string();
    }
    engine_log_path_ = opts_.engine.log_path;
    if (opts_.engine.time_scale <= 0)
        opts_.engine.time_scale = config_.time_scale;
    engine_ = std::make_unique<EngineService>(config_, opts_.engine);
    engine_->start();

    for (const auto& decl : config_.nodes) {
        NodeOptions nopts = opts_.node;
        if (nopts.log_path.empty()) {
            nopts.log_path =
                (std::filesystem::temp_directory_path() /
                 ("qdnet-node-" + decl.name + "-" + make_uuid() + ".jsonl"))
                    .string();
        }
        nodes_.push_back(
            std::make_unique<NodeService>(config_, decl.name, nopts));
        nodes_.back()->start();
    }
    running_ = true;
}

void LocalDeployment::stop() {
    if (!running_) return;
    running_ = false;
    for (auto& node : nodes_) node->stop();
    nodes_.clear();
    if (engine_) engine_->stop();
    engine_.reset();
    if (broker_) broker_->stop();
    broker_.reset();
}

NodeService& LocalDeployment::node(const std::string& name) {
    for (auto& node : nodes_)
        if (node->name() == name) return *node;
    throw std::invalid_argument("no such node '" + name + "'");
}

}  // namespace qdnet
