#include "qdnet/orchestrator.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qdnet/util.hpp"

namespace fs = std::filesystem;

namespace qdnet {

namespace {

std::string self_exe() {
    char buf[4096];
    ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n <= 0) throw std::runtime_error("cannot resolve /proc/self/exe");
    buf[n] = '\0';
    return buf;
}

bool tcp_ready(const std::string& host, uint16_t port) {
    try {
        int fd = tcp_connect(host, port);
        tcp_close(fd);
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

double StageReport::stage_s(const std::string& name) const {
    for (const auto& [n, s] : stages)
        if (n == name) return s;
    return 0.0;
}

json StageReport::to_json() const {
    json stage_obj = json::object();
    for (const auto& [name, s] : stages) stage_obj[name] = s;
    return {{"stages", stage_obj},
            {"action_counts", action_counts},
            {"node_count", node_count},
            {"total_s", total_s}};
}

std::string StageReport::table() const {
    std::ostringstream out;
    out << "stage                      seconds  actions\n";
    for (const auto& [name, s] : stages) {
        out << name;
        for (size_t i = name.size(); i < 27; ++i) out << ' ';
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%7.3f", s);
        out << buf << "  "
            << (action_counts.count(name) ? action_counts.at(name) : 0) << "\n";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%7.3f", total_s);
    out << "total                      " << buf << "  (" << node_count
        << " nodes)\n";
    return out.str();
}

Orchestrator::Orchestrator(RemoteExecutor& executor, OrchestratorOptions opts)
    : executor_(executor), opts_(std::move(opts)) {
    if (opts_.artifact_path.empty()) opts_.artifact_path = self_exe();
}

std::string Orchestrator::host_dir(const std::string& host_name) const {
    return opts_.run_dir + "/" + host_name;
}

std::string Orchestrator::engine_log_path() const {
    return opts_.run_dir + "/engine.jsonl";
}

StageReport Orchestrator::start(const NetworkConfig& config,
                                const Inventory& inventory) {
    DeploymentPlan plan = validate_pair(config, inventory);
    double time_scale =
        opts_.time_scale > 0 ? opts_.time_scale : config.time_scale;

    fs::create_directories(opts_.run_dir);
    std::string config_path = opts_.run_dir + "/network.yaml";
    {
        std::ofstream out(config_path);
        out << serialize_config(config);
    }

    StageReport report;
    report.node_count = static_cast<int>(config.nodes.size());
    std::vector<Launched> launched;
    double t0 = monotonic_s();

    auto run_stage = [&](const std::string& stage, auto&& body) {
        double begin = monotonic_s();
        size_t before = executor_.actions().size();
        try {
            body(stage);
        } catch (...) {
            rollback(launched);
            throw;
        }
        report.stages.emplace_back(stage, monotonic_s() - begin);
        int count = 0;
        auto actions = executor_.actions();
        for (size_t i = before; i < actions.size(); ++i)
            if (actions[i].stage == stage) ++count;
        report.action_counts[stage] = count;
    };

    const HostDecl* engine_host = inventory.find(config.engine_host);

    // Stage 1: install the node artifact and per-node configuration on every
    // node host.
    run_stage(kStageNodeInstall, [&](const std::string& stage) {
        for (const auto& node : config.nodes) {
            const HostDecl& host = *inventory.find(node.host);
            fs::create_directories(host_dir(host.host_name));
            std::string dst = host_dir(host.host_name) + "/qdnet";
            executor_.copy_file(host, opts_.artifact_path, dst);
            fs::permissions(dst, fs::perms::owner_all | fs::perms::group_exec |
                                     fs::perms::others_exec,
                            fs::perm_options::add);
            executor_.copy_file(host, config_path,
                                host_dir(host.host_name) + "/network.yaml");
            executor_.note(stage, host, "install node " + node.name);
        }
    });

    // Stage 2: install the engine artifact on the engine host.
    run_stage(kStageEngineInstall, [&](const std::string& stage) {
        fs::create_directories(host_dir(engine_host->host_name));
        std::string dst = host_dir(engine_host->host_name) + "/qdnet";
        executor_.copy_file(*engine_host, opts_.artifact_path, dst);
        fs::permissions(dst, fs::perms::owner_all | fs::perms::group_exec |
                                 fs::perms::others_exec,
                        fs::perm_options::add);
        executor_.copy_file(*engine_host, config_path,
                            host_dir(engine_host->host_name) + "/network.yaml");
        executor_.note(stage, *engine_host, "install engine");
    });

    // Stage 3: configure and start the bus on the engine host.
    run_stage(kStageBusConfig, [&](const std::string& stage) {
        std::string bin = host_dir(engine_host->host_name) + "/qdnet";
        int64_t pid = executor_.spawn(
            *engine_host,
            {bin, "broker", "--bind",
             config.bus_host + ":" + std::to_string(config.bus_port)},
            opts_.run_dir + "/broker.log");
        launched.push_back({*engine_host, pid, "broker"});
        executor_.note(stage, *engine_host, "start broker");
        double deadline = monotonic_s() + opts_.readiness_timeout_s;
        while (!tcp_ready(config.bus_host, config.bus_port)) {
            if (!executor_.alive(*engine_host, pid))
                throw std::runtime_error(
                    "broker exited during startup (port conflict?) on host " +
                    engine_host->host_name);
            if (monotonic_s() > deadline)
                throw std::runtime_error("broker not ready on host " +
                                         engine_host->host_name);
            sleep_s(0.02);
        }
    });

    // Stage 4: launch node processes, pointing each at the broker.
    run_stage(kStageNodeInit, [&](const std::string& stage) {
        for (const auto& node : config.nodes) {
            const HostDecl& host = *inventory.find(node.host);
            std::string dir = host_dir(host.host_name);
            int64_t pid = executor_.spawn(
                host,
                {dir + "/qdnet", "node", "--name", node.name, "--config",
                 dir + "/network.yaml", "--bus",
                 config.bus_host + ":" + std::to_string(config.bus_port),
                 "--port", std::to_string(node.api_port)},
                dir + "/node-" + node.name + ".log");
            launched.push_back({host, pid, "node:" + node.name});
            executor_.note(stage, host, "start node " + node.name);
        }
        for (size_t i = 0; i < config.nodes.size(); ++i) {
            const NodeDecl& node = config.nodes[i];
            const HostDecl& host = *inventory.find(node.host);
            int64_t pid = launched[launched.size() - config.nodes.size() + i].pid;
            double deadline = monotonic_s() + opts_.readiness_timeout_s;
            while (!tcp_ready(host.address, node.api_port)) {
                if (!executor_.alive(host, pid))
                    throw std::runtime_error(
                        "node '" + node.name +
                        "' exited during startup (port conflict?) on host " +
                        host.host_name);
                if (monotonic_s() > deadline)
                    throw std::runtime_error("node '" + node.name +
                                             "' not ready on host " +
                                             host.host_name);
                sleep_s(0.02);
            }
        }
    });

    // Stage 5: launch the engine with the network description.
    run_stage(kStageEngineInit, [&](const std::string& stage) {
        std::string dir = host_dir(engine_host->host_name);
        std::vector<std::string> argv = {
            dir + "/qdnet", "engine", "--config", dir + "/network.yaml",
            "--bus", config.bus_host + ":" + std::to_string(config.bus_port),
            "--log", engine_log_path(), "--time-scale",
            std::to_string(time_scale)};
        if (opts_.engine_seed) {
            argv.push_back("--seed");
            argv.push_back(std::to_string(opts_.engine_seed));
        }
        int64_t pid =
            executor_.spawn(*engine_host, argv, opts_.run_dir + "/engine.log");
        launched.push_back({*engine_host, pid, "engine"});
        executor_.note(stage, *engine_host, "start engine");
        double deadline = monotonic_s() + opts_.readiness_timeout_s;
        for (;;) {
            CommandResult probe = executor_.run(
                *engine_host, {"grep", "-q", "engine_started",
                               engine_log_path()});
            if (probe.exit_code == 0) break;
            if (!executor_.alive(*engine_host, pid))
                throw std::runtime_error("engine exited during startup");
            if (monotonic_s() > deadline)
                throw std::runtime_error("engine not ready");
            sleep_s(0.02);
        }
    });

    report.total_s = monotonic_s() - t0;
    save_state(launched);
    return report;
}

void Orchestrator::rollback(std::vector<Launched>& launched) {
    for (auto it = launched.rbegin(); it != launched.rend(); ++it) {
        try {
            executor_.terminate(it->host, it->pid);
        } catch (const std::exception&) {
        }
    }
    launched.clear();
}

void Orchestrator::save_state(const std::vector<Launched>& launched) {
    json state = json::array();
    for (const auto& l : launched) {
        state.push_back({{"host_name", l.host.host_name},
                         {"address", l.host.address},
                         {"connection", l.host.connection == HostConnection::ssh
                                            ? "ssh"
                                            : "local"},
                         {"user", l.host.user},
                         {"auth", l.host.auth},
                         {"pid", l.pid},
                         {"role", l.role}});
    }
    std::ofstream out(opts_.run_dir + "/state.json");
    out << state.dump(2) << "\n";
}

StopReport Orchestrator::stop(const Inventory& inventory) {
    StopReport report;
    std::string state_path = opts_.run_dir + "/state.json";
    std::ifstream in(state_path);
    if (!in) {
        report.nothing_to_stop = true;
        return report;
    }
    json state = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (!state.is_array()) {
        report.nothing_to_stop = true;
        return report;
    }
    for (const auto& entry : state) {
        HostDecl host;
        host.host_name = entry.value("host_name", "");
        host.address = entry.value("address", "127.0.0.1");
        host.connection = entry.value("connection", "local") == "ssh"
                              ? HostConnection::ssh
                              : HostConnection::local;
        host.user = entry.value("user", "");
        host.auth = entry.value("auth", "");
        // Prefer the current inventory's connection details when available.
        if (const HostDecl* h = inventory.find(host.host_name)) host = *h;
        try {
            executor_.terminate(host, entry.value("pid", int64_t{0}));
            ++report.terminated;
        } catch (const std::exception&) {
            report.unreachable_hosts.push_back(host.host_name);
        }
    }
    fs::remove(state_path);
    return report;
}

}  // namespace qdnet
