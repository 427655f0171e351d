#include "qdnet/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace qdnet {

namespace {

[[noreturn]] void fail(ConfigErrorKind kind, const std::string& msg) {
    throw ConfigError(kind, msg);
}

double get_real(const YAML::Node& n, const std::string& key, double dflt) {
    if (!n[key]) return dflt;
    try {
        return n[key].as<double>();
    } catch (const YAML::Exception&) {
        fail(ConfigErrorKind::bad_value, "field '" + key + "' is not a number");
    }
}

int get_int(const YAML::Node& n, const std::string& key, int dflt) {
    if (!n[key]) return dflt;
    try {
        return n[key].as<int>();
    } catch (const YAML::Exception&) {
        fail(ConfigErrorKind::bad_value, "field '" + key + "' is not an integer");
    }
}

std::string get_str(const YAML::Node& n, const std::string& key,
                    const std::string& dflt = "") {
    if (!n[key]) return dflt;
    return n[key].as<std::string>();
}

ProtocolParams parse_phys(const YAML::Node& n, ProtocolParams base) {
    base.pulses_per_round = get_int(n, "pulses_per_round", base.pulses_per_round);
    base.pulse_rate_hz = get_real(n, "pulse_rate_hz", base.pulse_rate_hz);
    base.detector_efficiency =
        get_real(n, "detector_efficiency", base.detector_efficiency);
    base.dark_count_prob = get_real(n, "dark_count_prob", base.dark_count_prob);
    base.depolarization_prob =
        get_real(n, "depolarization_prob", base.depolarization_prob);
    base.qber_sample_fraction =
        get_real(n, "qber_sample_fraction", base.qber_sample_fraction);
    base.classical_overhead_s =
        get_real(n, "classical_overhead_s", base.classical_overhead_s);
    base.qber_abort_threshold =
        get_real(n, "qber_abort_threshold", base.qber_abort_threshold);
    return base;
}

std::pair<std::string, uint16_t> parse_endpoint(const std::string& text) {
    auto pos = text.rfind(':');
    if (pos == std::string::npos || pos + 1 >= text.size())
        fail(ConfigErrorKind::bad_value,
             "bus_endpoint must be address:port, got '" + text + "'");
    int port = 0;
    try {
        port = std::stoi(text.substr(pos + 1));
    } catch (...) {
        fail(ConfigErrorKind::bad_value, "bus_endpoint port is not a number");
    }
    if (port < 1 || port > 65535)
        fail(ConfigErrorKind::bad_value, "bus_endpoint port out of range");
    return {text.substr(0, pos), static_cast<uint16_t>(port)};
}

}  // namespace

void ProtocolParams::validate() const {
    if (pulses_per_round < 1)
        fail(ConfigErrorKind::bad_value, "pulses_per_round must be positive");
    if (pulse_rate_hz <= 0)
        fail(ConfigErrorKind::bad_value, "pulse_rate_hz must be positive");
    if (detector_efficiency <= 0 || detector_efficiency > 1)
        fail(ConfigErrorKind::bad_value, "detector_efficiency must be in (0,1]");
    if (dark_count_prob < 0 || dark_count_prob >= 1)
        fail(ConfigErrorKind::bad_value, "dark_count_prob must be in [0,1)");
    if (depolarization_prob < 0 || depolarization_prob >= 1)
        fail(ConfigErrorKind::bad_value, "depolarization_prob must be in [0,1)");
    if (qber_sample_fraction <= 0 || qber_sample_fraction >= 1)
        fail(ConfigErrorKind::bad_value, "qber_sample_fraction must be in (0,1)");
    if (classical_overhead_s < 0)
        fail(ConfigErrorKind::bad_value, "classical_overhead_s must be >= 0");
    if (qber_abort_threshold <= 0 || qber_abort_threshold >= 0.5)
        fail(ConfigErrorKind::bad_value, "qber_abort_threshold must be in (0,0.5)");
}

std::string protocol_name(Protocol p) {
    return p == Protocol::bb84_with_eve ? "bb84_with_eve" : "extended_bb84";
}

Protocol protocol_from_name(const std::string& name) {
    if (name == "bb84_with_eve") return Protocol::bb84_with_eve;
    if (name == "extended_bb84") return Protocol::extended_bb84;
    fail(ConfigErrorKind::bad_value, "unknown protocol '" + name + "'");
}

const NodeDecl* NetworkConfig::find_node(const std::string& name) const {
    for (const auto& n : nodes)
        if (n.name == name) return &n;
    return nullptr;
}

const NodeDecl* NetworkConfig::find_node_by_sae(const std::string& sae) const {
    for (const auto& n : nodes)
        if (n.sae_id == sae) return &n;
    return nullptr;
}

const LinkDecl* NetworkConfig::find_link(const std::string& a,
                                         const std::string& b) const {
    int i = link_index(a, b);
    return i < 0 ? nullptr : &links[static_cast<size_t>(i)];
}

int NetworkConfig::link_index(const std::string& a,
                              const std::string& b) const {
    for (size_t i = 0; i < links.size(); ++i)
        if (links[i].joins(a, b)) return static_cast<int>(i);
    return -1;
}

const HostDecl* Inventory::find(const std::string& name) const {
    for (const auto& h : hosts)
        if (h.host_name == name) return &h;
    return nullptr;
}

NetworkConfig parse_config(const std::string& document) {
    YAML::Node root;
    try {
        root = YAML::Load(document);
    } catch (const YAML::ParserException& e) {
        fail(ConfigErrorKind::syntax, std::string("config syntax error: ") + e.what());
    }
    if (!root.IsMap()) fail(ConfigErrorKind::syntax, "config root must be a mapping");

    NetworkConfig cfg;
    std::set<std::string> names, saes;
    for (const auto& n : root["nodes"]) {
        NodeDecl node;
        node.name = get_str(n, "name");
        if (node.name.empty())
            fail(ConfigErrorKind::bad_value, "node name must be non-empty");
        if (node.name == "engine")
            fail(ConfigErrorKind::bad_value,
                 "node name 'engine' is reserved for the engine routing key");
        if (!names.insert(node.name).second)
            fail(ConfigErrorKind::duplicate_node,
                 "duplicate node '" + node.name + "'");
        node.sae_id = get_str(n, "sae_id", node.name);
        if (!saes.insert(node.sae_id).second)
            fail(ConfigErrorKind::duplicate_sae,
                 "duplicate sae_id '" + node.sae_id + "'");
        node.host = get_str(n, "host", node.name);
        int port = get_int(n, "api_port", 0);
        if (port < 1 || port > 65535)
            fail(ConfigErrorKind::bad_value,
                 "node '" + node.name + "' api_port must be in [1,65535]");
        node.api_port = static_cast<uint16_t>(port);
        cfg.nodes.push_back(std::move(node));
    }
    if (cfg.nodes.empty())
        fail(ConfigErrorKind::missing_field, "config declares no nodes");

    for (const auto& l : root["links"]) {
        LinkDecl link;
        link.endpoint_a = get_str(l, "endpoint_a");
        link.endpoint_b = get_str(l, "endpoint_b");
        for (const auto* ep : {&link.endpoint_a, &link.endpoint_b}) {
            if (!names.count(*ep))
                fail(ConfigErrorKind::unknown_endpoint,
                     "unknown endpoint '" + *ep + "'");
        }
        if (link.endpoint_a == link.endpoint_b)
            fail(ConfigErrorKind::self_link,
                 "link endpoints must be distinct ('" + link.endpoint_a + "')");
        for (const auto& prev : cfg.links) {
            if (prev.joins(link.endpoint_a, link.endpoint_b))
                fail(ConfigErrorKind::duplicate_link,
                     "duplicate link " + link.id());
        }
        link.length_km = get_real(l, "length_km", 0.0);
        if (link.length_km < 0)
            fail(ConfigErrorKind::bad_value, "length_km must be >= 0");
        bool has_total = static_cast<bool>(l["attenuation_db"]);
        bool has_per_km = static_cast<bool>(l["attenuation_db_per_km"]);
        if (has_total && has_per_km)
            fail(ConfigErrorKind::bad_value,
                 "specify attenuation_db or attenuation_db_per_km, not both");
        link.attenuation_db =
            has_per_km ? get_real(l, "attenuation_db_per_km", 0.0) * link.length_km
                       : get_real(l, "attenuation_db", 0.0);
        if (link.attenuation_db < 0)
            fail(ConfigErrorKind::bad_value, "attenuation must be >= 0");
        link.protocol = protocol_from_name(
            get_str(l, "protocol", protocol_name(Protocol::bb84_with_eve)));
        if (l["eve"]) {
            EveDecl eve;
            eve.intercept_fraction = get_real(l["eve"], "intercept_fraction", 0.0);
            eve.position_km = get_real(l["eve"], "position_km", 0.0);
            eve.error_per_intercept =
                get_real(l["eve"], "error_per_intercept", 0.25);
            if (eve.intercept_fraction < 0 || eve.intercept_fraction > 1)
                fail(ConfigErrorKind::bad_value,
                     "eve.intercept_fraction must be in [0,1]");
            if (eve.position_km < 0 || eve.position_km > link.length_km)
                fail(ConfigErrorKind::bad_value,
                     "eve.position_km must be in [0,length_km]");
            if (eve.error_per_intercept < 0 || eve.error_per_intercept > 1)
                fail(ConfigErrorKind::bad_value,
                     "eve.error_per_intercept must be in [0,1]");
            link.eve = eve;
        }
        if (l["phys"]) link.phys = parse_phys(l["phys"], ProtocolParams{});
        link.phys.validate();
        cfg.links.push_back(std::move(link));
    }

    cfg.engine_host = get_str(root, "engine_host");
    if (cfg.engine_host.empty())
        fail(ConfigErrorKind::missing_field, "engine_host is required");
    std::string bus = get_str(root, "bus_endpoint");
    if (bus.empty())
        fail(ConfigErrorKind::missing_field, "bus_endpoint is required");
    std::tie(cfg.bus_host, cfg.bus_port) = parse_endpoint(bus);
    cfg.time_scale = get_real(root, "time_scale", 1.0);
    if (cfg.time_scale <= 0)
        fail(ConfigErrorKind::bad_value, "time_scale must be > 0");
    return cfg;
}

Inventory parse_inventory(const std::string& document) {
    YAML::Node root;
    try {
        root = YAML::Load(document);
    } catch (const YAML::ParserException& e) {
        fail(ConfigErrorKind::syntax,
             std::string("inventory syntax error: ") + e.what());
    }
    if (!root.IsMap() || !root["hosts"])
        fail(ConfigErrorKind::missing_field, "inventory requires a 'hosts' list");

    Inventory inv;
    std::set<std::string> seen;
    for (const auto& h : root["hosts"]) {
        HostDecl host;
        host.host_name = get_str(h, "host_name");
        if (host.host_name.empty())
            fail(ConfigErrorKind::bad_value, "host_name must be non-empty");
        if (!seen.insert(host.host_name).second)
            fail(ConfigErrorKind::duplicate_host,
                 "duplicate host '" + host.host_name + "'");
        std::string conn = get_str(h, "connection", "local");
        if (conn == "local") {
            host.connection = HostConnection::local;
        } else if (conn == "ssh") {
            host.connection = HostConnection::ssh;
        } else {
            fail(ConfigErrorKind::bad_value,
                 "connection must be 'local' or 'ssh', got '" + conn + "'");
        }
        host.address = get_str(h, "address");
        if (host.connection == HostConnection::ssh && host.address.empty())
            fail(ConfigErrorKind::missing_field,
                 "ssh host '" + host.host_name + "' requires an address");
        if (host.address.empty()) host.address = "127.0.0.1";
        host.user = get_str(h, "user");
        host.auth = get_str(h, "auth");
        inv.hosts.push_back(std::move(host));
    }
    return inv;
}

std::string serialize_config(const NetworkConfig& cfg) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "nodes" << YAML::Value << YAML::BeginSeq;
    for (const auto& n : cfg.nodes) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << n.name;
        out << YAML::Key << "sae_id" << YAML::Value << n.sae_id;
        out << YAML::Key << "host" << YAML::Value << n.host;
        out << YAML::Key << "api_port" << YAML::Value << n.api_port;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "links" << YAML::Value << YAML::BeginSeq;
    for (const auto& l : cfg.links) {
        out << YAML::BeginMap;
        out << YAML::Key << "endpoint_a" << YAML::Value << l.endpoint_a;
        out << YAML::Key << "endpoint_b" << YAML::Value << l.endpoint_b;
        out << YAML::Key << "length_km" << YAML::Value << l.length_km;
        out << YAML::Key << "attenuation_db" << YAML::Value << l.attenuation_db;
        out << YAML::Key << "protocol" << YAML::Value << protocol_name(l.protocol);
        if (l.eve) {
            out << YAML::Key << "eve" << YAML::Value << YAML::BeginMap;
            out << YAML::Key << "intercept_fraction" << YAML::Value
                << l.eve->intercept_fraction;
            out << YAML::Key << "position_km" << YAML::Value << l.eve->position_km;
            out << YAML::Key << "error_per_intercept" << YAML::Value
                << l.eve->error_per_intercept;
            out << YAML::EndMap;
        }
        out << YAML::Key << "phys" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "pulses_per_round" << YAML::Value
            << l.phys.pulses_per_round;
        out << YAML::Key << "pulse_rate_hz" << YAML::Value << l.phys.pulse_rate_hz;
        out << YAML::Key << "detector_efficiency" << YAML::Value
            << l.phys.detector_efficiency;
        out << YAML::Key << "dark_count_prob" << YAML::Value
            << l.phys.dark_count_prob;
        out << YAML::Key << "depolarization_prob" << YAML::Value
            << l.phys.depolarization_prob;
        out << YAML::Key << "qber_sample_fraction" << YAML::Value
            << l.phys.qber_sample_fraction;
        out << YAML::Key << "classical_overhead_s" << YAML::Value
            << l.phys.classical_overhead_s;
        out << YAML::Key << "qber_abort_threshold" << YAML::Value
            << l.phys.qber_abort_threshold;
        out << YAML::EndMap;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "engine_host" << YAML::Value << cfg.engine_host;
    out << YAML::Key << "bus_endpoint" << YAML::Value
        << (cfg.bus_host + ":" + std::to_string(cfg.bus_port));
    out << YAML::Key << "time_scale" << YAML::Value << cfg.time_scale;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

DeploymentPlan validate_pair(const NetworkConfig& cfg, const Inventory& inv) {
    DeploymentPlan plan;
    for (const auto& n : cfg.nodes) {
        const HostDecl* h = inv.find(n.host);
        if (!h)
            fail(ConfigErrorKind::unresolved_host,
                 "node '" + n.name + "' references host '" + n.host +
                     "' missing from the inventory");
        plan.assignments.push_back({"node", n.name, *h, n.api_port});
    }
    const HostDecl* eh = inv.find(cfg.engine_host);
    if (!eh)
        fail(ConfigErrorKind::unresolved_host,
             "engine_host '" + cfg.engine_host + "' missing from the inventory");
    plan.assignments.push_back({"broker", "broker", *eh, cfg.bus_port});
    plan.assignments.push_back({"engine", "engine", *eh, 0});
    return plan;
}

namespace {
std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigErrorKind::syntax, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
}  // namespace

NetworkConfig load_config_file(const std::string& path) {
    return parse_config(slurp(path));
}

Inventory load_inventory_file(const std::string& path) {
    return parse_inventory(slurp(path));
}

}  // namespace qdnet
