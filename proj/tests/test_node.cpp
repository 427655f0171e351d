#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <future>

#include "qdnet/deploy.hpp"
#include "qdnet/harness.hpp"
#include "qdnet/keystore.hpp"
#include "qdnet/util.hpp"

using namespace qdnet;

namespace {

struct Net {
    NetworkConfig cfg;
    LocalDeployment deployment;

    explicit Net(LocalDeployment::Options opts = make_opts(),
                 NetworkConfig base = star_topology_ideal())
        : cfg(LocalDeployment::assign_ports(std::move(base))),
          deployment(cfg, std::move(opts)) {
        deployment.start();
    }

    static LocalDeployment::Options make_opts() {
        LocalDeployment::Options opts;
        opts.engine.seed = 321;
        opts.engine.time_scale = 200.0;
        return opts;
    }

    httplib::Client client(const std::string& node) {
        httplib::Client c("127.0.0.1", cfg.find_node(node)->api_port);
        c.set_read_timeout(60, 0);
        return c;
    }
};

json body_of(const httplib::Result& res) {
    REQUIRE(res);
    return json::parse(res->body);
}

}  // namespace

TEST_CASE("status endpoint describes the pairing") {
    Net net;
    auto c = net.client("Quintin");
    auto res = c.Get("/api/v1/keys/Quijote/status");
    REQUIRE(res);
    CHECK(res->status == 200);
    json body = body_of(res);
    CHECK(body["source_KME_ID"] == "Quintin");
    CHECK(body["target_KME_ID"] == "Quijote");
    CHECK(body["master_SAE_ID"] == "Quintin");
    CHECK(body["slave_SAE_ID"] == "Quijote");
    CHECK(body["key_size"] == 256);
    CHECK(body["stored_key_count"] == 0);
    CHECK(body["max_key_per_request"] == 1);
    CHECK(body["min_key_size"] == 8);
    CHECK(body["max_key_size"] == 65536);

    auto missing = c.Get("/api/v1/keys/Rocinante/status");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(body_of(missing).contains("message"));

    // a node is not its own peer
    auto self = c.Get("/api/v1/keys/Quintin/status");
    REQUIRE(self);
    CHECK(self->status == 404);
}

TEST_CASE("get_key delivers a container, and the peer can look it up") {
    Net net;
    auto initiator = net.client("Quintin");
    auto res = initiator.Get("/api/v1/keys/Quijote/enc_keys?number=1&size=128");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    json container = body_of(res);
    REQUIRE(container["keys"].size() == 1);
    std::string key_id = container["keys"][0]["key_ID"];
    std::string key_b64 = container["keys"][0]["key"];
    CHECK(!key_id.empty());
    CHECK(base64_decode(key_b64).size() * 8 == 128);

    // peer side: get_key_with_ids by query parameter; the peer's copy is
    // delivered over the bus and can trail the initiator's response briefly
    auto peer = net.client("Quijote");
    auto dec = peer.Get("/api/v1/keys/Quintin/dec_keys?key_ID=" + key_id);
    for (int i = 0; i < 50 && dec && dec->status != 200; ++i) {
        sleep_s(0.05);
        dec = peer.Get("/api/v1/keys/Quintin/dec_keys?key_ID=" + key_id);
    }
    REQUIRE(dec);
    REQUIRE(dec->status == 200);
    CHECK(body_of(dec)["keys"][0]["key"] == key_b64);

    // and by POSTed body
    json post_body = {{"key_IDs", json::array({json{{"key_ID", key_id}}})}};
    auto dec2 = peer.Post("/api/v1/keys/Quintin/dec_keys", post_body.dump(),
                          "application/json");
    REQUIRE(dec2);
    REQUIRE(dec2->status == 200);
    CHECK(body_of(dec2)["keys"][0]["key"] == key_b64);

    // stored-key count went up on the initiator's side
    json status = body_of(initiator.Get("/api/v1/keys/Quijote/status"));
    CHECK(status["stored_key_count"] == 1);
}

TEST_CASE("get_key via POST body and defaulted size") {
    Net net;
    auto c = net.client("Quevedo");
    auto res = c.Post("/api/v1/keys/Quijote/enc_keys",
                      json{{"number", 1}, {"size", 64}}.dump(),
                      "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK(base64_decode(body_of(res)["keys"][0]["key"].get<std::string>())
              .size() == 8);

    auto dflt = c.Get("/api/v1/keys/Quijote/enc_keys");
    REQUIRE(dflt);
    REQUIRE(dflt->status == 200);
    CHECK(base64_decode(body_of(dflt)["keys"][0]["key"].get<std::string>())
              .size() *
              8 ==
          256);
}

TEST_CASE("parameter validation on get_key") {
    Net net;
    auto c = net.client("Quintin");
    for (const std::string query :
         {"?number=2", "?number=0", "?size=0", "?size=12", "?size=100000",
          "?size=abc"}) {
        auto res = c.Get("/api/v1/keys/Quijote/enc_keys" + query);
        REQUIRE(res);
        CHECK(res->status == 400);
        CHECK(body_of(res).contains("message"));
    }
    auto unknown = c.Get("/api/v1/keys/Dulcinea/enc_keys");
    REQUIRE(unknown);
    CHECK(unknown->status == 404);
}

TEST_CASE("keys only flow over declared links") {
    Net net;
    auto c = net.client("Quintin");
    // Quintin--Quevedo has no link; the node rejects and points at relaying
    auto res = c.Get("/api/v1/keys/Quevedo/enc_keys?size=64");
    REQUIRE(res);
    CHECK(res->status == 400);
    std::string message = body_of(res)["message"];
    CHECK(message.find("relay") != std::string::npos);
}

TEST_CASE("dec_keys rejects wrong SAE, unknown and spent ids") {
    Net net;
    auto initiator = net.client("Quintin");
    json container =
        body_of(initiator.Get("/api/v1/keys/Quijote/enc_keys?size=64"));
    std::string key_id = container["keys"][0]["key_ID"];

    auto peer = net.client("Quijote");
    // the key belongs to the Quintin pairing, not the Aquiles one
    auto wrong_master = peer.Get("/api/v1/keys/Aquiles/dec_keys?key_ID=" + key_id);
    REQUIRE(wrong_master);
    CHECK(wrong_master->status == 400);

    auto bogus = peer.Get("/api/v1/keys/Quintin/dec_keys?key_ID=" + make_uuid());
    REQUIRE(bogus);
    CHECK(bogus->status == 400);
    CHECK(body_of(bogus)["message"].get<std::string>().find("not found") !=
          std::string::npos);

    auto none = peer.Get("/api/v1/keys/Quintin/dec_keys");
    REQUIRE(none);
    CHECK(none->status == 400);
}

TEST_CASE("stored keys expire after their TTL") {
    LocalDeployment::Options opts = Net::make_opts();
    opts.node.ttl_s = 1.0;
    Net net(opts);
    auto initiator = net.client("Quintin");
    json container =
        body_of(initiator.Get("/api/v1/keys/Quijote/enc_keys?size=64"));
    std::string key_id = container["keys"][0]["key_ID"];

    auto peer = net.client("Quijote");
    auto fresh = peer.Get("/api/v1/keys/Quintin/dec_keys?key_ID=" + key_id);
    REQUIRE(fresh);
    CHECK(fresh->status == 200);

    sleep_s(1.6);
    auto expired = peer.Get("/api/v1/keys/Quintin/dec_keys?key_ID=" + key_id);
    REQUIRE(expired);
    CHECK(expired->status == 400);
    CHECK(body_of(expired)["message"].get<std::string>().find("expired") !=
          std::string::npos);

    json status = body_of(initiator.Get("/api/v1/keys/Quijote/status"));
    CHECK(status["stored_key_count"] == 0);  // purged, not just hidden
}

TEST_CASE("duplicate key ids never overwrite stored material") {
    KeyStore store(600.0);
    CHECK(store.insert("id-1", {0x01, 0x02}, "peer"));
    CHECK_FALSE(store.insert("id-1", {0xff, 0xee}, "peer"));
    auto kept = store.get("id-1");
    REQUIRE(kept.has_value());
    CHECK(kept->material == std::vector<uint8_t>{0x01, 0x02});

    // same through the node: replaying a result on the bus is a no-op
    Net net;
    BusClient injector;
    injector.connect("127.0.0.1", net.deployment.config().bus_port);
    std::string key_id = make_uuid();
    std::vector<uint8_t> original{0xAA, 0xBB}, replay{0x11, 0x22};
    json payload = {{"request_id", key_id},   {"key_id", key_id},
                    {"status", "ok"},         {"qber", 0.0},
                    {"initiator", "Quintin"}, {"peer", "Quijote"},
                    {"key", base64_encode(original)}};
    injector.publish("Quijote", "modeling_result", payload);
    payload["key"] = base64_encode(replay);
    injector.publish("Quijote", "modeling_result", payload);
    sleep_s(0.3);

    auto peer = net.client("Quijote");
    auto dec = peer.Get("/api/v1/keys/Quintin/dec_keys?key_ID=" + key_id);
    REQUIRE(dec);
    REQUIRE(dec->status == 200);
    CHECK(base64_decode(body_of(dec)["keys"][0]["key"].get<std::string>()) ==
          std::vector<uint8_t>{0xAA, 0xBB});
    injector.close();
}

TEST_CASE("a slow get_key does not block concurrent lookups") {
    LocalDeployment::Options opts = Net::make_opts();
    opts.engine.time_scale = 10.0;  // a 512-bit exchange takes ~0.6s of wall time
    Net net(opts);

    auto fast_setup = net.client("Quintin");
    json container =
        body_of(fast_setup.Get("/api/v1/keys/Quijote/enc_keys?size=64"));
    std::string ready_id = container["keys"][0]["key_ID"];

    auto slow = std::async(std::launch::async, [&] {
        auto c = net.client("Quijote");
        return c.Get("/api/v1/keys/Aquiles/enc_keys?size=512");
    });
    sleep_s(0.1);  // the slow exchange is now in flight on the Quijote node

    double t0 = monotonic_s();
    auto peer = net.client("Quijote");
    auto dec = peer.Get("/api/v1/keys/Quintin/dec_keys?key_ID=" + ready_id);
    double elapsed = monotonic_s() - t0;
    REQUIRE(dec);
    CHECK(dec->status == 200);
    CHECK(elapsed < 0.5);  // answered while the other request was pending

    auto slow_res = slow.get();
    REQUIRE(slow_res);
    CHECK(slow_res->status == 200);
}

TEST_CASE("node responses and logs never leak raw key material") {
    std::string log_path = "/tmp/qdnet-test-node-" + make_uuid() + ".jsonl";
    LocalDeployment::Options opts = Net::make_opts();
    opts.node.log_path = log_path;
    Net net(opts);
    auto c = net.client("Quintin");
    json container = body_of(c.Get("/api/v1/keys/Quijote/enc_keys?size=256"));
    std::string key_b64 = container["keys"][0]["key"];
    std::string key_hex = to_hex(base64_decode(key_b64));

    for (const auto& rec : read_jsonl(log_path)) {
        std::string line = rec.dump();
        CHECK(line.find(key_b64) == std::string::npos);
        CHECK(line.find(key_hex) == std::string::npos);
    }
}
