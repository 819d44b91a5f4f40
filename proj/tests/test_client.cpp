/*
 * Copyright 2026 The rescue-sense Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <doctest.h>

#include "rescue/broker.hpp"
#include "rescue/client.hpp"
#include "rescue/net.hpp"
#include "support.hpp"

using namespace rescue;
using namespace rescue::client;
using namespace std::chrono_literals;

namespace {

broker::ServerOptions ephemeral()
{
    broker::ServerOptions o;
    o.port = 0;
    o.scan_interval = 50ms;
    return o;
}

ClientConfig config(const broker::BrokerServer& server, proto::Role role, std::string id = generate_client_id())
{
    ClientConfig c;
    c.broker = server.endpoint();
    c.role = role;
    c.client_id = std::move(id);
    c.timeout = 2000ms;
    return c;
}

ClientErrc code_of(auto&& fn)
{
    try {
        fn();
    } catch (const ClientError& e) {
        return e.code();
    }
    FAIL("expected ClientError");
    return ClientErrc::Rejected;
}

std::optional<proto::Notify> next_notify(Client& c, std::chrono::milliseconds wait = 2000ms)
{
    const auto until = std::chrono::steady_clock::now() + wait;
    while (std::chrono::steady_clock::now() < until) {
        auto d = c.next(50ms);
        if (d) {
            if (auto* n = std::get_if<proto::Notify>(&*d)) {
                return *n;
            }
        }
    }
    return std::nullopt;
}

std::optional<proto::Presence> next_presence(Client& c, std::chrono::milliseconds wait = 2000ms)
{
    const auto until = std::chrono::steady_clock::now() + wait;
    while (std::chrono::steady_clock::now() < until) {
        auto d = c.next(50ms);
        if (d) {
            if (auto* p = std::get_if<proto::Presence>(&*d)) {
                return *p;
            }
        }
    }
    return std::nullopt;
}

}  // namespace

TEST_CASE("generated client ids are well formed and distinct")
{
    const auto a = generate_client_id();
    const auto b = generate_client_id();
    CHECK(a.size() == 19);
    CHECK(a.rfind("ic-", 0) == 0);
    CHECK(a != b);
    CHECK(is_valid_client_id(a));
}

TEST_CASE("nothing listening gives ConnectionRefused")
{
    std::uint16_t port = 0;
    {
        auto l = net::listen_tcp("127.0.0.1", 0);
        port = net::local_port(l);
    }
    ClientConfig c;
    c.broker = {"127.0.0.1", port};
    c.client_id = "x";
    c.timeout = 500ms;
    CHECK(code_of([&] { Client::connect(c); }) == ClientErrc::ConnectionRefused);
}

TEST_CASE("a silent peer gives HandshakeTimeout")
{
    auto l = net::listen_tcp("127.0.0.1", 0);
    ClientConfig c;
    c.broker = {"127.0.0.1", net::local_port(l)};
    c.client_id = "x";
    c.timeout = 300ms;
    CHECK(code_of([&] { Client::connect(c); }) == ClientErrc::HandshakeTimeout);
}

TEST_CASE("publish reaches a subscriber with sequence numbers from 1")
{
    broker::BrokerServer server(ephemeral());
    server.start();
    auto sub = Client::connect(config(server, proto::Role::Subscriber));
    const auto sid = sub->subscribe("kind=THERMOMETER and value>=50");
    auto pub = Client::connect(config(server, proto::Role::Publisher, "phone-1"));

    auto cold = pub->make_event(SensorKind::Thermometer, 20.0, {1, 2, 3}, 1000);
    auto hot = pub->make_event(SensorKind::Thermometer, 80.0, {1, 2, 3}, 1001);
    CHECK(cold.seq == 1);
    CHECK(hot.seq == 2);
    CHECK(hot.publisher_id == "phone-1");
    CHECK(hot.event_id.rfind("phone-1:", 0) == 0);
    CHECK(hot.event_id.substr(hot.event_id.size() - 2) == ":2");
    CHECK(hot.unit == "celsius");
    pub->publish(cold);
    pub->publish(hot);
    CHECK(pub->last_seq() == 2);

    const auto n = next_notify(*sub);
    REQUIRE(n.has_value());
    CHECK(n->event == hot);
    CHECK(n->subscription_ids == std::vector<std::string>{sid});
    CHECK_FALSE(next_notify(*sub, 200ms).has_value());
    pub->close();
    sub->close();
    server.stop();
}

TEST_CASE("client-side checks")
{
    broker::BrokerServer server(ephemeral());
    server.start();
    auto pub = Client::connect(config(server, proto::Role::Publisher, "phone-2"));
    auto sub = Client::connect(config(server, proto::Role::Subscriber));

    auto e = pub->make_event(SensorKind::Light, 100.0, {0, 0, 1}, 1);
    auto forged = e;
    forged.publisher_id = "someone";
    CHECK(code_of([&] { pub->publish(forged); }) == ClientErrc::EventInvalid);
    auto bad_unit = e;
    bad_unit.unit = "nits";
    CHECK(code_of([&] { pub->publish(bad_unit); }) == ClientErrc::EventInvalid);
    pub->publish(e);
    CHECK(code_of([&] { pub->publish(e); }) == ClientErrc::EventInvalid);  // same seq again

    CHECK(code_of([&] { pub->subscribe(""); }) == ClientErrc::NotASubscriber);
    CHECK(code_of([&] { sub->publish(e); }) == ClientErrc::NotAPublisher);
    CHECK(code_of([&] { sub->subscribe("kind=SONAR"); }) == ClientErrc::InvalidPredicate);
    CHECK(code_of([&] { sub->subscribe("geo in [1,1,0,0]"); }) == ClientErrc::InvalidPredicate);
    server.stop();
}

TEST_CASE("broker-side subscription cap surfaces as TooManySubscriptions")
{
    auto opts = ephemeral();
    opts.broker.max_subscriptions = 2;
    broker::BrokerServer server(opts);
    server.start();
    auto sub = Client::connect(config(server, proto::Role::Subscriber));
    sub->subscribe("");
    sub->subscribe("kind=GPS");
    CHECK(code_of([&] { sub->subscribe("kind=LIGHT"); }) == ClientErrc::TooManySubscriptions);
    server.stop();
}

TEST_CASE("unsubscribe stops deliveries")
{
    broker::BrokerServer server(ephemeral());
    server.start();
    auto sub = Client::connect(config(server, proto::Role::Subscriber));
    const auto sid = sub->subscribe("");
    auto pub = Client::connect(config(server, proto::Role::Publisher, "p"));
    pub->publish(pub->make_event(SensorKind::Gps, 1.0, {0, 0, 1}, 1));
    REQUIRE(next_notify(*sub).has_value());
    sub->unsubscribe(sid);
    CHECK(testing::eventually([&] { return server.core().registry().size() == 0; }));
    pub->publish(pub->make_event(SensorKind::Gps, 1.0, {0, 0, 1}, 2));
    CHECK_FALSE(next_notify(*sub, 300ms).has_value());
    server.stop();
}

TEST_CASE("subscribers see presence; BYE is announced as GONE")
{
    broker::BrokerServer server(ephemeral());
    server.start();
    auto sub = Client::connect(config(server, proto::Role::Subscriber));
    auto pub = Client::connect(config(server, proto::Role::Publisher, "phone-9"));
    auto p = next_presence(*sub);
    REQUIRE(p.has_value());
    CHECK(p->publisher_id == "phone-9");
    CHECK(p->state == proto::PresenceState::Fresh);
    pub->close();
    p = next_presence(*sub);
    REQUIRE(p.has_value());
    CHECK(p->state == proto::PresenceState::Gone);
    server.stop();
}

TEST_CASE("an aborted publisher is not announced as GONE")
{
    broker::BrokerServer server(ephemeral());
    server.start();
    auto sub = Client::connect(config(server, proto::Role::Subscriber));
    auto pub = Client::connect(config(server, proto::Role::Publisher, "phone-10"));
    REQUIRE(next_presence(*sub).has_value());
    pub->abort();
    CHECK_FALSE(next_presence(*sub, 300ms).has_value());
    server.stop();
}

TEST_CASE("broker shutdown closes client sessions")
{
    broker::BrokerServer server(ephemeral());
    server.start();
    auto sub = Client::connect(config(server, proto::Role::Subscriber));
    sub->subscribe("");
    server.stop();
    CHECK(testing::eventually([&] { return sub->closed(); }));
    auto pub_cfg = config(server, proto::Role::Publisher);
    CHECK(code_of([&] { Client::connect(pub_cfg); }) == ClientErrc::ConnectionRefused);
}

TEST_CASE("heartbeats keep an idle publisher fresh")
{
    auto clock = std::make_shared<ManualClock>(10'000'000);
    broker::BrokerServer server(ephemeral(), clock);
    server.start();
    auto cfg = config(server, proto::Role::Publisher, "idle");
    cfg.heartbeat_interval = 20ms;
    auto pub = Client::connect(cfg);
    for (int i = 0; i < 10; ++i) {
        clock->advance(5'000);
        std::this_thread::sleep_for(60ms);
    }
    const auto pres = server.core().presence();
    REQUIRE(pres.count("idle") == 1);
    CHECK_FALSE(pres.at("idle").stale);
    server.stop();
}
