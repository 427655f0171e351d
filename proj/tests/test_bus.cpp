#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <vector>

#include "qdnet/broker.hpp"
#include "qdnet/bus.hpp"
#include "qdnet/util.hpp"

using namespace qdnet;

namespace {

struct Collector {
    std::mutex mutex;
    std::condition_variable cv;
    std::vector<BusMessage> messages;

    BusClient::Handler handler() {
        return [this](const BusMessage& msg) {
            std::lock_guard<std::mutex> lock(mutex);
            messages.push_back(msg);
            cv.notify_all();
        };
    }

    bool wait_for(size_t count, double timeout_s = 10.0) {
        std::unique_lock<std::mutex> lock(mutex);
        return cv.wait_for(lock, std::chrono::duration<double>(timeout_s),
                           [&] { return messages.size() >= count; });
    }

    size_t size() {
        std::lock_guard<std::mutex> lock(mutex);
        return messages.size();
    }
};

struct Fixture {
    Broker broker;
    Fixture(Broker::Options opts = {}) : broker(std::move(opts)) {
        broker.start();
    }
    ~Fixture() { broker.stop(); }
    uint16_t port() const { return broker.port(); }
};

}  // namespace

TEST_CASE("published message reaches the subscriber exactly once") {
    Fixture fx;
    BusClient pub, sub;
    pub.connect("127.0.0.1", fx.port());
    sub.connect("127.0.0.1", fx.port());

    Collector got;
    sub.subscribe("alpha", got.handler());
    pub.publish("alpha", "modeling_request", {{"n", 1}});
    REQUIRE(got.wait_for(1));
    sleep_s(0.2);  // allow any duplicate to surface
    CHECK(got.size() == 1);
    CHECK(got.messages[0].routing_key == "alpha");
    CHECK(got.messages[0].kind == "modeling_request");
    CHECK(got.messages[0].payload["n"] == 1);
    CHECK(!got.messages[0].message_id.empty());
    pub.close();
    sub.close();
}

TEST_CASE("per-publisher order is preserved") {
    Fixture fx;
    BusClient pub, sub;
    pub.connect("127.0.0.1", fx.port());
    sub.connect("127.0.0.1", fx.port());

    Collector got;
    sub.subscribe("seq", got.handler());
    const int kCount = 10000;
    for (int i = 0; i < kCount; ++i)
        pub.publish("seq", "modeling_request", {{"seq", i}});
    REQUIRE(got.wait_for(kCount, 60.0));
    REQUIRE(got.size() == kCount);
    for (int i = 0; i < kCount; ++i)
        CHECK(got.messages[static_cast<size_t>(i)].payload["seq"] == i);
    pub.close();
    sub.close();
}

TEST_CASE("messages published before any subscriber are retained") {
    Fixture fx;
    BusClient pub;
    pub.connect("127.0.0.1", fx.port());
    pub.publish("late", "modeling_result", {{"k", "v1"}});
    pub.publish("late", "modeling_result", {{"k", "v2"}});

    BusClient sub;
    sub.connect("127.0.0.1", fx.port());
    Collector got;
    sub.subscribe("late", got.handler());
    REQUIRE(got.wait_for(2));
    CHECK(got.messages[0].payload["k"] == "v1");
    CHECK(got.messages[1].payload["k"] == "v2");
    pub.close();
    sub.close();
}

TEST_CASE("retained messages expire after the retention window") {
    Broker::Options opts;
    opts.retention_ttl_s = 0.3;
    Fixture fx(opts);
    BusClient pub;
    pub.connect("127.0.0.1", fx.port());
    pub.publish("ephemeral", "modeling_result", {{"k", 1}});
    sleep_s(1.2);  // past TTL plus a sweep period

    BusClient sub;
    sub.connect("127.0.0.1", fx.port());
    Collector got;
    sub.subscribe("ephemeral", got.handler());
    CHECK_FALSE(got.wait_for(1, 0.5));
    pub.close();
    sub.close();
}

TEST_CASE("no leakage across routing keys") {
    Fixture fx;
    BusClient pub, sub_a, sub_b;
    pub.connect("127.0.0.1", fx.port());
    sub_a.connect("127.0.0.1", fx.port());
    sub_b.connect("127.0.0.1", fx.port());

    Collector got_a, got_b;
    sub_a.subscribe("node-a", got_a.handler());
    sub_b.subscribe("node-b", got_b.handler());
    for (int i = 0; i < 50; ++i) {
        pub.publish("node-a", "modeling_result", {{"for", "a"}, {"i", i}});
        pub.publish("node-b", "modeling_result", {{"for", "b"}, {"i", i}});
    }
    REQUIRE(got_a.wait_for(50));
    REQUIRE(got_b.wait_for(50));
    sleep_s(0.2);
    CHECK(got_a.size() == 50);
    CHECK(got_b.size() == 50);
    for (const auto& m : got_a.messages) CHECK(m.payload["for"] == "a");
    for (const auto& m : got_b.messages) CHECK(m.payload["for"] == "b");
    pub.close();
    sub_a.close();
    sub_b.close();
}

TEST_CASE("fanout: every subscriber of a key receives the message") {
    Fixture fx;
    BusClient pub, sub1, sub2;
    pub.connect("127.0.0.1", fx.port());
    sub1.connect("127.0.0.1", fx.port());
    sub2.connect("127.0.0.1", fx.port());

    Collector got1, got2;
    sub1.subscribe("fan", got1.handler());
    sub2.subscribe("fan", got2.handler());
    pub.publish("fan", "modeling_result", {{"x", 42}});
    REQUIRE(got1.wait_for(1));
    REQUIRE(got2.wait_for(1));
    CHECK(got1.messages[0].payload["x"] == 42);
    CHECK(got2.messages[0].payload["x"] == 42);
    pub.close();
    sub1.close();
    sub2.close();
}

TEST_CASE("oversized payloads are rejected, and the session survives") {
    Fixture fx;
    BusClient pub, sub;
    pub.connect("127.0.0.1", fx.port());
    sub.connect("127.0.0.1", fx.port());
    Collector got;
    sub.subscribe("big", got.handler());

    std::string huge(kMaxPayloadBytes + 1, 'x');
    CHECK_THROWS_AS(pub.publish("big", "modeling_request", {{"blob", huge}}),
                    std::runtime_error);
    // the connection still works afterwards
    pub.publish("big", "modeling_request", {{"blob", "small"}});
    REQUIRE(got.wait_for(1));
    CHECK(got.messages[0].payload["blob"] == "small");
    pub.close();
    sub.close();
}

TEST_CASE("publishing without a broker fails loudly") {
    BusClient orphan;
    CHECK_THROWS_AS(orphan.publish("x", "modeling_request", {{"n", 1}}),
                    std::runtime_error);
    uint16_t dead_port = pick_free_port();
    CHECK_THROWS_AS(orphan.connect("127.0.0.1", dead_port), std::exception);
}

TEST_CASE("broker restart on the same port serves fresh state only") {
    uint16_t port = pick_free_port();
    {
        Broker::Options opts;
        opts.port = port;
        Fixture fx(opts);
        BusClient pub;
        pub.connect("127.0.0.1", port);
        pub.publish("volatile", "modeling_result", {{"gen", 1}});
        pub.close();
    }
    Broker::Options opts;
    opts.port = port;
    Fixture fx(opts);  // state is volatile: nothing carries over
    BusClient sub;
    sub.connect("127.0.0.1", port);
    Collector got;
    sub.subscribe("volatile", got.handler());
    CHECK_FALSE(got.wait_for(1, 0.5));
    sub.close();
}
