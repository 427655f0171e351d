#pragma once

#include <map>
#include <string>
#include <vector>

#include "qdnet/config.hpp"
#include "qdnet/executor.hpp"
#include "qdnet/frame.hpp"

namespace qdnet {

struct StageReport {
    // Stage name -> duration in seconds, in execution order.
    std::vector<std::pair<std::string, double>> stages;
    std::map<std::string, int> action_counts;  // stage -> provisioning actions
    int node_count = 0;
    double total_s = 0.0;

    double stage_s(const std::string& name) const;
    json to_json() const;
    std::string table() const;
};

struct StopReport {
    int terminated = 0;
    std::vector<std::string> unreachable_hosts;
    bool nothing_to_stop = false;
};

struct OrchestratorOptions {
    std::string run_dir = "qdnet-run";
    std::string artifact_path;  // qdnet binary; defaults to /proc/self/exe
    double time_scale = 0.0;    // 0 -> config value
    uint64_t engine_seed = 0;
    double readiness_timeout_s = 5.0;
};

// start/stop driver over the five provisioning stages. Stage boundaries are
// barriers: a stage begins only after the previous one succeeded everywhere.
class Orchestrator {
   public:
    Orchestrator(RemoteExecutor& executor, OrchestratorOptions opts);

    // Throws on failure after rolling back already-launched processes.
    StageReport start(const NetworkConfig& config, const Inventory& inventory);
    StopReport stop(const Inventory& inventory);

    static constexpr const char* kStageNodeInstall = "node_installation";
    static constexpr const char* kStageEngineInstall = "engine_installation";
    static constexpr const char* kStageBusConfig = "bus_configuration";
    static constexpr const char* kStageNodeInit = "node_initialization";
    static constexpr const char* kStageEngineInit = "engine_initialization";

    std::string engine_log_path() const;

   private:
    struct Launched {
        HostDecl host;
        int64_t pid;
        std::string role;
    };

    std::string host_dir(const std::string& host_name) const;
    void rollback(std::vector<Launched>& launched);
    void save_state(const std::vector<Launched>& launched);

    RemoteExecutor& executor_;
    OrchestratorOptions opts_;
};

}  // namespace qdnet
