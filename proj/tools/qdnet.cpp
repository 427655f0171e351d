// qdnet: one binary for every network role plus the deployment driver.
//
//   qdnet broker --bind HOST:PORT             message bus
//   qdnet node   --name N --config F ...      per-node key-delivery daemon
//   qdnet engine --config F ...               link modeling engine
//   qdnet start  --config F --inventory F     provision a whole deployment
//   qdnet stop   --inventory F                tear a deployment down
//   qdnet relay  --config F --path A,B,C      trusted-node end-to-end key

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "qdnet/broker.hpp"
#include "qdnet/config.hpp"
#include "qdnet/engine.hpp"
#include "qdnet/executor.hpp"
#include "qdnet/node.hpp"
#include "qdnet/orchestrator.hpp"
#include "qdnet/relay.hpp"
#include "qdnet/util.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

void install_signal_handlers() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
}

void wait_for_signal() {
    while (!g_stop) qdnet::sleep_s(0.1);
}

std::pair<std::string, uint16_t> split_endpoint(const std::string& endpoint) {
    auto pos = endpoint.rfind(':');
    if (pos == std::string::npos)
        throw CLI::ValidationError("expected HOST:PORT, got '" + endpoint + "'");
    int port = std::stoi(endpoint.substr(pos + 1));
    if (port < 1 || port > 65535)
        throw CLI::ValidationError("port out of range in '" + endpoint + "'");
    return {endpoint.substr(0, pos), static_cast<uint16_t>(port)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed key-distribution network emulator"};
    app.require_subcommand(1);

    // --- broker ---
    auto* broker_cmd = app.add_subcommand("broker", "run the message bus");
    std::string bind = "127.0.0.1:5672";
    std::string capture;
    broker_cmd->add_option("--bind", bind, "HOST:PORT to listen on");
    broker_cmd->add_option("--capture", capture,
                           "append every published frame to this file");

    // --- node ---
    auto* node_cmd = app.add_subcommand("node", "run one node daemon");
    std::string node_name, node_config, node_bus;
    int node_port = 0, node_relay_port = 0;
    double node_ttl = 600.0;
    node_cmd->add_option("--name", node_name, "node name")->required();
    node_cmd->add_option("--config", node_config, "network YAML")->required();
    node_cmd->add_option("--bus", node_bus, "bus HOST:PORT override");
    node_cmd->add_option("--port", node_port, "key-delivery API port override");
    node_cmd->add_option("--relay-port", node_relay_port,
                         "relay channel port (default api port + 1)");
    node_cmd->add_option("--ttl", node_ttl, "stored-key lifetime in seconds");

    // --- engine ---
    auto* engine_cmd = app.add_subcommand("engine", "run the modeling engine");
    std::string engine_config, engine_bus, engine_log;
    double engine_time_scale = 0.0;
    uint64_t engine_seed = 0;
    bool engine_no_buffer = false, engine_strict = false;
    engine_cmd->add_option("--config", engine_config, "network YAML")->required();
    engine_cmd->add_option("--bus", engine_bus, "bus HOST:PORT override");
    engine_cmd->add_option("--log", engine_log, "JSONL event log path");
    engine_cmd->add_option("--time-scale", engine_time_scale,
                           "latency compression factor (default: config value)");
    auto* seed_opt = engine_cmd->add_option("--seed", engine_seed,
                                            "master seed (default: random)");
    engine_cmd->add_flag("--no-buffer", engine_no_buffer,
                         "discard leftover bits between exchanges");
    engine_cmd->add_flag("--strict", engine_strict,
                         "fail exchanges on detected eavesdropping");

    // --- start ---
    auto* start_cmd = app.add_subcommand("start", "provision a deployment");
    std::string start_config, start_inventory, start_run_dir = "qdnet-run";
    std::string start_report;
    double start_time_scale = 0.0;
    uint64_t start_seed = 0;
    start_cmd->add_option("--config", start_config, "network YAML")->required();
    start_cmd->add_option("--inventory", start_inventory, "hosts YAML")
        ->required();
    start_cmd->add_option("--run-dir", start_run_dir, "working directory");
    start_cmd->add_option("--report", start_report,
                          "write the stage report as JSON to this file");
    start_cmd->add_option("--time-scale", start_time_scale,
                          "latency compression override");
    start_cmd->add_option("--seed", start_seed, "engine master seed");

    // --- stop ---
    auto* stop_cmd = app.add_subcommand("stop", "tear a deployment down");
    std::string stop_inventory, stop_run_dir = "qdnet-run";
    stop_cmd->add_option("--inventory", stop_inventory, "hosts YAML")
        ->required();
    stop_cmd->add_option("--run-dir", stop_run_dir, "working directory");

    // --- relay ---
    auto* relay_cmd =
        app.add_subcommand("relay", "establish a trusted-node end-to-end key");
    std::string relay_config, relay_api_host = "127.0.0.1";
    std::vector<std::string> relay_path;
    int relay_size = 256;
    bool relay_reveal = false;
    uint64_t relay_seed = 0;
    relay_cmd->add_option("--config", relay_config, "network YAML")->required();
    relay_cmd->add_option("--path", relay_path,
                          "comma-separated node path, initiator first")
        ->required()
        ->delimiter(',');
    relay_cmd->add_option("--size", relay_size, "key size in bits");
    relay_cmd->add_option("--api-host", relay_api_host,
                          "address the node APIs listen on");
    auto* relay_seed_opt =
        relay_cmd->add_option("--seed", relay_seed, "RNG seed for the key");
    relay_cmd->add_flag("--reveal", relay_reveal,
                        "print the key material in hex (testing only)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*broker_cmd) {
            install_signal_handlers();
            auto [host, port] = split_endpoint(bind);
            qdnet::Broker::Options opts;
            opts.bind_host = host;
            opts.port = port;
            opts.capture_path = capture;
            qdnet::Broker broker(opts);
            broker.start();
            std::cerr << "broker listening on " << host << ":" << broker.port()
                      << "\n";
            wait_for_signal();
            broker.stop();
            return 0;
        }

        if (*node_cmd) {
            install_signal_handlers();
            qdnet::NetworkConfig cfg = qdnet::load_config_file(node_config);
            if (!node_bus.empty()) {
                auto [host, port] = split_endpoint(node_bus);
                cfg.bus_host = host;
                cfg.bus_port = port;
            }
            for (auto& n : cfg.nodes)
                if (n.name == node_name && node_port > 0)
                    n.api_port = static_cast<uint16_t>(node_port);
            qdnet::NodeOptions opts;
            opts.ttl_s = node_ttl;
            if (node_relay_port > 0)
                opts.relay_port = static_cast<uint16_t>(node_relay_port);
            qdnet::NodeService node(cfg, node_name, opts);
            node.start();
            std::cerr << "node " << node_name << " serving on port "
                      << node.api_port() << "\n";
            wait_for_signal();
            node.stop();
            return 0;
        }

        if (*engine_cmd) {
            install_signal_handlers();
            qdnet::NetworkConfig cfg = qdnet::load_config_file(engine_config);
            if (!engine_bus.empty()) {
                auto [host, port] = split_endpoint(engine_bus);
                cfg.bus_host = host;
                cfg.bus_port = port;
            }
            qdnet::EngineOptions opts;
            opts.log_path = engine_log;
            opts.time_scale =
                engine_time_scale > 0 ? engine_time_scale : cfg.time_scale;
            opts.seed = seed_opt->count() ? engine_seed
                                          : std::random_device{}();
            opts.buffering = !engine_no_buffer;
            opts.strict_compromise = engine_strict;
            qdnet::EngineService engine(cfg, opts);
            engine.start();
            std::cerr << "engine running (time scale " << opts.time_scale
                      << ")\n";
            wait_for_signal();
            engine.stop();
            return 0;
        }

        if (*start_cmd) {
            qdnet::NetworkConfig cfg = qdnet::load_config_file(start_config);
            qdnet::Inventory inv = qdnet::load_inventory_file(start_inventory);
            qdnet::DispatchingExecutor exec;
            qdnet::OrchestratorOptions opts;
            opts.run_dir = start_run_dir;
            opts.time_scale = start_time_scale;
            opts.engine_seed = start_seed;
            qdnet::Orchestrator orch(exec, opts);
            qdnet::StageReport report = orch.start(cfg, inv);
            std::cout << report.table();
            if (!start_report.empty()) {
                std::ofstream out(start_report);
                out << report.to_json().dump(2) << "\n";
            }
            return 0;
        }

        if (*stop_cmd) {
            qdnet::Inventory inv = qdnet::load_inventory_file(stop_inventory);
            qdnet::DispatchingExecutor exec;
            qdnet::OrchestratorOptions opts;
            opts.run_dir = stop_run_dir;
            qdnet::Orchestrator orch(exec, opts);
            qdnet::StopReport report = orch.stop(inv);
            if (report.nothing_to_stop) {
                std::cout << "nothing to stop\n";
            } else {
                std::cout << "terminated " << report.terminated
                          << " processes\n";
                for (const auto& host : report.unreachable_hosts)
                    std::cerr << "warning: host unreachable: " << host << "\n";
            }
            return report.unreachable_hosts.empty() ? 0 : 1;
        }

        if (*relay_cmd) {
            qdnet::NetworkConfig cfg = qdnet::load_config_file(relay_config);
            qdnet::RelayPath path = qdnet::RelayPath::validate(relay_path, cfg);
            qdnet::RelayClient client(cfg, relay_api_host);
            std::mt19937_64 rng(relay_seed_opt->count()
                                    ? relay_seed
                                    : std::random_device{}());
            qdnet::RelayResult result =
                client.relay_key(path, relay_size, rng);
            std::cout << "key_ID: " << result.key_id << "\n";
            std::cout << "size:   " << result.key.size() * 8 << " bits\n";
            if (relay_reveal)
                std::cout << "key:    " << qdnet::to_hex(result.key) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
