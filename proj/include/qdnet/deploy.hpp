#pragma once

#include <memory>
#include <vector>

#include "qdnet/broker.hpp"
#include "qdnet/config.hpp"
#include "qdnet/engine.hpp"
#include "qdnet/node.hpp"

namespace qdnet {

// Broker + engine + all nodes running in-process (real TCP/HTTP on
// loopback). Used by the harness and integration tests; process-per-role
// deployment goes through the orchestrator instead.
class LocalDeployment {
   public:
    struct Options {
        EngineOptions engine;
        NodeOptions node;
        std::string broker_capture_path;
    };

    LocalDeployment(NetworkConfig config, Options opts);
    ~LocalDeployment();

    LocalDeployment(const LocalDeployment&) = delete;
    LocalDeployment& operator=(const LocalDeployment&) = delete;

    void start();
    void stop();

    const NetworkConfig& config() const { return config_; }
    EngineService& engine() { return *engine_; }
    NodeService& node(const std::string& name);
    std::string engine_log_path() const { return engine_log_path_; }

    // Config with ephemeral ports assigned to the bus and every node.
    static NetworkConfig assign_ports(NetworkConfig config);

   private:
    NetworkConfig config_;
    Options opts_;
    std::string engine_log_path_;
    std::unique_ptr<Broker> broker_;
    std::unique_ptr<EngineService> engine_;
    std::vector<std::unique_ptr<NodeService>> nodes_;
    bool running_ = false;
};

}  // namespace qdnet
