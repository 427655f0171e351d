#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qdnet/config.hpp"
#include "qdnet/harness.hpp"

using namespace qdnet;

namespace {

const char* kValidConfig = R"(
nodes:
  - name: Quintin
    api_port: 8010
  - name: Quijote
    sae_id: quijote-sae
    api_port: 8011
  - name: Quevedo
    api_port: 8012
links:
  - endpoint_a: Quintin
    endpoint_b: Quijote
    protocol: bb84_with_eve
    eve:
      intercept_fraction: 0.3
      error_per_intercept: 0.5
  - endpoint_a: Quijote
    endpoint_b: Quevedo
    protocol: extended_bb84
    length_km: 7.4
    attenuation_db: 5.4
    phys:
      pulses_per_round: 400
      classical_overhead_s: 0.5
engine_host: Quijote
bus_endpoint: 127.0.0.1:5672
time_scale: 50
)";

ConfigErrorKind kind_of(const std::string& doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError& e) {
        return e.kind();
    }
    FAIL("expected the config to be rejected");
    return ConfigErrorKind::syntax;
}

}  // namespace

TEST_CASE("valid document parses with defaults applied") {
    NetworkConfig cfg = parse_config(kValidConfig);
    REQUIRE(cfg.nodes.size() == 3);
    CHECK(cfg.nodes[0].sae_id == "Quintin");  // defaults to the name
    CHECK(cfg.nodes[0].host == "Quintin");
    CHECK(cfg.nodes[1].sae_id == "quijote-sae");
    CHECK(cfg.nodes[1].api_port == 8011);

    REQUIRE(cfg.links.size() == 2);
    CHECK(cfg.links[0].protocol == Protocol::bb84_with_eve);
    REQUIRE(cfg.links[0].eve.has_value());
    CHECK(cfg.links[0].eve->intercept_fraction == doctest::Approx(0.3));
    CHECK(cfg.links[0].eve->error_per_intercept == doctest::Approx(0.5));
    CHECK(cfg.links[0].phys.pulses_per_round == 10000);  // default
    CHECK(cfg.links[0].phys.qber_abort_threshold == doctest::Approx(0.11));

    CHECK(cfg.links[1].protocol == Protocol::extended_bb84);
    CHECK(cfg.links[1].length_km == doctest::Approx(7.4));
    CHECK(cfg.links[1].attenuation_db == doctest::Approx(5.4));
    CHECK(cfg.links[1].phys.pulses_per_round == 400);
    CHECK(cfg.links[1].phys.classical_overhead_s == doctest::Approx(0.5));
    CHECK(cfg.links[1].phys.detector_efficiency == doctest::Approx(0.9));

    CHECK(cfg.engine_host == "Quijote");
    CHECK(cfg.bus_host == "127.0.0.1");
    CHECK(cfg.bus_port == 5672);
    CHECK(cfg.time_scale == doctest::Approx(50.0));
}

TEST_CASE("adjacency and lookup helpers") {
    NetworkConfig cfg = parse_config(kValidConfig);
    CHECK(cfg.adjacent("Quintin", "Quijote"));
    CHECK(cfg.adjacent("Quijote", "Quintin"));  // orientation-free
    CHECK_FALSE(cfg.adjacent("Quintin", "Quevedo"));
    CHECK(cfg.link_index("Quevedo", "Quijote") == 1);
    CHECK(cfg.find_node("nope") == nullptr);
    CHECK(cfg.find_node_by_sae("quijote-sae")->name == "Quijote");
}

TEST_CASE("per-km attenuation is derived from length") {
    std::string doc = R"(
nodes:
  - {name: A, api_port: 8001}
  - {name: B, api_port: 8002}
links:
  - endpoint_a: A
    endpoint_b: B
    length_km: 10
    attenuation_db_per_km: 0.21
engine_host: A
bus_endpoint: 127.0.0.1:5672
)";
    NetworkConfig cfg = parse_config(doc);
    CHECK(cfg.links[0].attenuation_db == doctest::Approx(2.1));
    CHECK(cfg.time_scale == doctest::Approx(1.0));  // default
}

TEST_CASE("rejections carry the right category") {
    std::string base = std::string(kValidConfig);

    CHECK(kind_of("nodes: [\n") == ConfigErrorKind::syntax);
    CHECK(kind_of("just a scalar") == ConfigErrorKind::syntax);

    auto replaced = [&](const std::string& from, const std::string& to) {
        std::string doc = base;
        auto pos = doc.find(from);
        REQUIRE(pos != std::string::npos);
        return doc.replace(pos, from.size(), to);
    };

    CHECK(kind_of(replaced("name: Quintin", "name: Quijote")) ==
          ConfigErrorKind::duplicate_node);
    CHECK(kind_of(replaced("sae_id: quijote-sae", "sae_id: Quintin")) ==
          ConfigErrorKind::duplicate_sae);
    CHECK(kind_of(replaced("endpoint_b: Quevedo", "endpoint_b: Quintin")) ==
          ConfigErrorKind::duplicate_link);
    CHECK(kind_of(replaced("endpoint_a: Quintin", "endpoint_a: Sancho")) ==
          ConfigErrorKind::unknown_endpoint);
    CHECK(kind_of(replaced("endpoint_b: Quevedo", "endpoint_b: Quijote")) ==
          ConfigErrorKind::self_link);
    CHECK(kind_of(replaced("api_port: 8010", "api_port: 0")) ==
          ConfigErrorKind::bad_value);
    CHECK(kind_of(replaced("intercept_fraction: 0.3",
                           "intercept_fraction: 1.5")) ==
          ConfigErrorKind::bad_value);
    CHECK(kind_of(replaced("pulses_per_round: 400", "pulses_per_round: 0")) ==
          ConfigErrorKind::bad_value);
    CHECK(kind_of(replaced("time_scale: 50", "time_scale: -1")) ==
          ConfigErrorKind::bad_value);
    CHECK(kind_of(replaced("engine_host: Quijote", "ignored: x")) ==
          ConfigErrorKind::missing_field);
    CHECK(kind_of(replaced("bus_endpoint: 127.0.0.1:5672", "ignored2: x")) ==
          ConfigErrorKind::missing_field);
    CHECK(kind_of(replaced("name: Quintin", "name: engine")) ==
          ConfigErrorKind::bad_value);  // reserved routing key
    CHECK(kind_of(replaced("attenuation_db: 5.4",
                           "attenuation_db: 5.4\n    attenuation_db_per_km: 1")) ==
          ConfigErrorKind::bad_value);
}

TEST_CASE("inventory parsing and host rules") {
    Inventory inv = parse_inventory(R"(
hosts:
  - host_name: alpha
  - host_name: beta
    connection: ssh
    address: 10.0.0.7
    user: op
)");
    REQUIRE(inv.hosts.size() == 2);
    CHECK(inv.hosts[0].connection == HostConnection::local);
    CHECK(inv.hosts[0].address == "127.0.0.1");  // local default
    CHECK(inv.hosts[1].connection == HostConnection::ssh);
    CHECK(inv.hosts[1].address == "10.0.0.7");
    CHECK(inv.find("beta")->user == "op");
    CHECK(inv.find("gamma") == nullptr);

    auto inv_kind = [](const std::string& doc) {
        try {
            parse_inventory(doc);
        } catch (const ConfigError& e) {
            return e.kind();
        }
        FAIL("expected the inventory to be rejected");
        return ConfigErrorKind::syntax;
    };
    CHECK(inv_kind("hosts:\n  - host_name: a\n  - host_name: a\n") ==
          ConfigErrorKind::duplicate_host);
    CHECK(inv_kind("hosts:\n  - host_name: a\n    connection: ssh\n") ==
          ConfigErrorKind::missing_field);
    CHECK(inv_kind("hosts:\n  - host_name: a\n    connection: carrier-pigeon\n") ==
          ConfigErrorKind::bad_value);
    CHECK(inv_kind("{}") == ConfigErrorKind::missing_field);
}

TEST_CASE("config/inventory cross-validation produces a full plan") {
    NetworkConfig cfg = parse_config(kValidConfig);
    Inventory inv = parse_inventory(R"(
hosts:
  - host_name: Quintin
  - host_name: Quijote
  - host_name: Quevedo
)");
    DeploymentPlan plan = validate_pair(cfg, inv);
    // one assignment per node plus broker and engine
    REQUIRE(plan.assignments.size() == 5);
    CHECK(plan.assignments[0].role == "node");
    CHECK(plan.assignments[3].role == "broker");
    CHECK(plan.assignments[3].host.host_name == "Quijote");
    CHECK(plan.assignments[4].role == "engine");

    Inventory missing = parse_inventory("hosts:\n  - host_name: Quintin\n");
    CHECK_THROWS_AS(validate_pair(cfg, missing), ConfigError);
}

TEST_CASE("serialize/parse round-trip preserves the network") {
    NetworkConfig cfg = parse_config(kValidConfig);
    NetworkConfig again = parse_config(serialize_config(cfg));
    REQUIRE(again.nodes.size() == cfg.nodes.size());
    REQUIRE(again.links.size() == cfg.links.size());
    for (size_t i = 0; i < cfg.nodes.size(); ++i) {
        CHECK(again.nodes[i].name == cfg.nodes[i].name);
        CHECK(again.nodes[i].sae_id == cfg.nodes[i].sae_id);
        CHECK(again.nodes[i].api_port == cfg.nodes[i].api_port);
    }
    for (size_t i = 0; i < cfg.links.size(); ++i) {
        CHECK(again.links[i].id() == cfg.links[i].id());
        CHECK(again.links[i].protocol == cfg.links[i].protocol);
        CHECK(again.links[i].attenuation_db ==
              doctest::Approx(cfg.links[i].attenuation_db));
        CHECK(again.links[i].eve.has_value() == cfg.links[i].eve.has_value());
        CHECK(again.links[i].phys.pulses_per_round ==
              cfg.links[i].phys.pulses_per_round);
        CHECK(again.links[i].phys.classical_overhead_s ==
              doctest::Approx(cfg.links[i].phys.classical_overhead_s));
    }
    CHECK(again.bus_port == cfg.bus_port);
    CHECK(again.time_scale == doctest::Approx(cfg.time_scale));
}

TEST_CASE("built-in star topologies are themselves valid") {
    for (NetworkConfig cfg : {star_topology_ideal(), star_topology_realistic()}) {
        cfg.bus_port = 5672;
        for (auto& n : cfg.nodes) n.api_port = 8000;
        NetworkConfig parsed = parse_config(serialize_config(cfg));
        CHECK(parsed.nodes.size() == 4);
        CHECK(parsed.links.size() == 3);
        // every link touches the hub
        for (const auto& l : parsed.links)
            CHECK((l.endpoint_a == "Quijote" || l.endpoint_b == "Quijote"));
    }
    // fiber figures on the lossy variant
    NetworkConfig real = star_topology_realistic();
    const LinkDecl* qa = real.find_link("Quijote", "Aquiles");
    REQUIRE(qa != nullptr);
    CHECK(qa->length_km == doctest::Approx(40.68));
    CHECK(qa->attenuation_db == doctest::Approx(11.9));
    const LinkDecl* qv = real.find_link("Quijote", "Quevedo");
    REQUIRE(qv != nullptr);
    CHECK(qv->length_km == doctest::Approx(7.4));
    CHECK(qv->attenuation_db == doctest::Approx(5.4));
}
