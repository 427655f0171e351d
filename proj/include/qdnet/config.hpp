#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdnet {

// Category of a configuration rejection, so tests and callers can tell
// violations apart without string matching.
enum class ConfigErrorKind {
    syntax,
    bad_value,
    duplicate_node,
    duplicate_sae,
    duplicate_link,
    unknown_endpoint,
    self_link,
    duplicate_host,
    missing_field,
    unresolved_host,
};

class ConfigError : public std::runtime_error {
   public:
    ConfigError(ConfigErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ConfigErrorKind kind() const { return kind_; }

   private:
    ConfigErrorKind kind_;
};

// Per-round physical/protocol knobs. Defaults put multi-hundred-bit keys in
// the sub-second regime; every field is overridable per link.
struct ProtocolParams {
    int pulses_per_round = 10000;
    double pulse_rate_hz = 1.0e6;
    double detector_efficiency = 0.9;
    double dark_count_prob = 1.0e-5;
    double depolarization_prob = 0.0;
    double qber_sample_fraction = 0.25;
    double classical_overhead_s = 0.01;
    double qber_abort_threshold = 0.11;

    void validate() const;  // throws ConfigError(bad_value)
};

struct EveDecl {
    double intercept_fraction = 0.0;
    double position_km = 0.0;
    // Per intercepted sifted bit. 0.25 is random-basis intercept-resend.
    double error_per_intercept = 0.25;
};

enum class Protocol { bb84_with_eve, extended_bb84 };

std::string protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& name);

struct LinkDecl {
    std::string endpoint_a;
    std::string endpoint_b;
    double length_km = 0.0;
    double attenuation_db = 0.0;
    Protocol protocol = Protocol::bb84_with_eve;
    std::optional<EveDecl> eve;
    ProtocolParams phys;

    std::string id() const { return endpoint_a + "--" + endpoint_b; }
    bool joins(const std::string& x, const std::string& y) const {
        return (endpoint_a == x && endpoint_b == y) ||
               (endpoint_a == y && endpoint_b == x);
    }
};

struct NodeDecl {
    std::string name;
    std::string sae_id;   // defaults to name
    std::string host;     // inventory host reference, defaults to name
    uint16_t api_port = 0;
};

struct NetworkConfig {
    std::vector<NodeDecl> nodes;
    std::vector<LinkDecl> links;
    std::string engine_host;
    std::string bus_host;
    uint16_t bus_port = 0;
    double time_scale = 1.0;

    const NodeDecl* find_node(const std::string& name) const;
    const NodeDecl* find_node_by_sae(const std::string& sae) const;
    const LinkDecl* find_link(const std::string& a, const std::string& b) const;
    int link_index(const std::string& a, const std::string& b) const;  // -1 if none
    bool adjacent(const std::string& a, const std::string& b) const {
        return link_index(a, b) >= 0;
    }
};

enum class HostConnection { local, ssh };

struct HostDecl {
    std::string host_name;
    std::string address;
    HostConnection connection = HostConnection::local;
    std::string user;
    std::string auth;  // opaque credential reference
};

struct Inventory {
    std::vector<HostDecl> hosts;
    const HostDecl* find(const std::string& name) const;
};

struct DeploymentPlan {
    struct Assignment {
        std::string role;  // "node" | "engine" | "broker"
        std::string name;
        HostDecl host;
        uint16_t port = 0;
    };
    std::vector<Assignment> assignments;
};

NetworkConfig parse_config(const std::string& document);
Inventory parse_inventory(const std::string& document);
std::string serialize_config(const NetworkConfig& config);
DeploymentPlan validate_pair(const NetworkConfig& config, const Inventory& inv);

NetworkConfig load_config_file(const std::string& path);
Inventory load_inventory_file(const std::string& path);

}  // namespace qdnet
