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
#include "rescue/net.hpp"
#include "support.hpp"

using namespace rescue;
using namespace rescue::broker;
using namespace std::chrono_literals;

namespace {

struct Core {
    std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>(1'000'000);
    Broker broker;

    explicit Core(BrokerOptions opts = {}) : broker(opts, clock) {}

    SessionPtr open(const std::string& id, proto::Role role)
    {
        auto s = broker.open_session({"v1", role, id});
        s->outbox.drain();  // HELLO_ACK and any presence
        return s;
    }
};

SensorEvent event_from(const std::string& pub, std::int64_t seq, SensorKind kind = SensorKind::Thermometer,
                       double value = 20.0)
{
    SensorEvent e;
    e.publisher_id = pub;
    e.seq = seq;
    e.event_id = pub + ":t:" + std::to_string(seq);
    e.timestamp_ms = 1000 + seq;
    e.kind = kind;
    e.unit = std::string(unit_for(kind));
    e.value = kind == SensorKind::Accelerometer ? SensorValue{Vec3{0, 0, 1}} : SensorValue{value};
    e.position = {1, 2, 3};
    return e;
}

std::vector<proto::Frame> frames(Session& s)
{
    std::vector<proto::Frame> out;
    for (auto& line : s.outbox.drain()) {
        out.push_back(proto::decode_frame(line));
    }
    return out;
}

template <typename T>
std::vector<T> only(const std::vector<proto::Frame>& fs)
{
    std::vector<T> out;
    for (const auto& f : fs) {
        if (const auto* p = std::get_if<T>(&f)) {
            out.push_back(*p);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("outbox drops newest data frames at the cap but keeps control frames")
{
    Outbox box(3);
    CHECK(box.offer("a"));
    CHECK(box.offer("b"));
    CHECK(box.offer("c"));
    CHECK_FALSE(box.offer("d"));
    box.force("ctl");
    CHECK(box.dropped() == 1);
    CHECK(box.drain() == std::vector<std::string>{"a", "b", "c", "ctl"});
    box.close();
    CHECK_FALSE(box.offer("e"));
    CHECK(box.closed_and_empty());
    CHECK_FALSE(box.pop(1ms).has_value());
}

TEST_CASE("handshake validation")
{
    Core c;
    CHECK_THROWS_AS(c.broker.open_session({"v2", proto::Role::Publisher, "x"}), BrokerError);
    CHECK_THROWS_AS(c.broker.open_session({"v1", proto::Role::Publisher, ""}), BrokerError);
    auto s = c.broker.open_session({"v1", proto::Role::Subscriber, "sub"});
    const auto fs = frames(*s);
    REQUIRE(!fs.empty());
    CHECK(std::holds_alternative<proto::HelloAck>(fs.front()));
}

TEST_CASE("routing delivers to matching subscribers only, once per session")
{
    Core c;
    auto sub1 = c.open("s1", proto::Role::Subscriber);
    auto sub2 = c.open("s2", proto::Role::Subscriber);
    auto pub = c.open("p", proto::Role::Publisher);
    const auto a1 = c.broker.subscribe(*sub1, "kind=THERMOMETER");
    const auto a2 = c.broker.subscribe(*sub1, "value>10");
    c.broker.subscribe(*sub2, "kind=GPS");
    frames(*sub1);
    frames(*sub2);

    const auto report = c.broker.route(event_from("p", 1), *pub);
    CHECK(report.delivered == 1);
    const auto n1 = only<proto::Notify>(frames(*sub1));
    REQUIRE(n1.size() == 1);
    CHECK(n1[0].subscription_ids == std::vector<std::string>{a1.subscription_id, a2.subscription_id});
    CHECK(n1[0].event == event_from("p", 1));
    CHECK(only<proto::Notify>(frames(*sub2)).empty());
}

TEST_CASE("a Both-role session never receives its own events")
{
    Core c;
    auto both = c.open("dual", proto::Role::Both);
    c.broker.subscribe(*both, "");
    auto other = c.open("other", proto::Role::Publisher);
    frames(*both);
    c.broker.route(event_from("dual", 1), *both);
    CHECK(only<proto::Notify>(frames(*both)).empty());
    c.broker.route(event_from("other", 1), *other);
    CHECK(only<proto::Notify>(frames(*both)).size() == 1);
}

TEST_CASE("role and identity rules")
{
    Core c;
    auto sub = c.open("s", proto::Role::Subscriber);
    auto pub = c.open("p", proto::Role::Publisher);

    c.broker.handle(*sub, proto::Publish{event_from("s", 1)});
    auto errs = only<proto::Error>(frames(*sub));
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].code == "NotAPublisher");
    CHECK(errs[0].in_reply_to == "PUBLISH");

    c.broker.handle(*pub, proto::Subscribe{"kind=GPS"});
    errs = only<proto::Error>(frames(*pub));
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].code == "NotASubscriber");

    c.broker.handle(*pub, proto::Publish{event_from("someone-else", 1)});
    errs = only<proto::Error>(frames(*pub));
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].code == "PublisherMismatch");

    c.broker.handle(*sub, proto::Subscribe{"kind=SONAR"});
    errs = only<proto::Error>(frames(*sub));
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].code == "InvalidPredicate");

    c.broker.handle(*sub, proto::Unsubscribe{"9.9"});
    errs = only<proto::Error>(frames(*sub));
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].code == "UnknownSubscription");

    c.broker.handle(*sub, proto::Hello{"v1", proto::Role::Subscriber, "s"});
    CHECK(only<proto::Error>(frames(*sub)).at(0).code == "AlreadyGreeted");
}

TEST_CASE("subscription cap")
{
    BrokerOptions opts;
    opts.max_subscriptions = 3;
    Core c(opts);
    auto sub = c.open("s", proto::Role::Subscriber);
    for (int i = 0; i < 3; ++i) {
        c.broker.subscribe(*sub, "");
    }
    CHECK_THROWS_AS(c.broker.subscribe(*sub, ""), BrokerError);
    CHECK(c.broker.registry().count_for(sub->id) == 3);
}

TEST_CASE("unsubscribe stops delivery")
{
    Core c;
    auto sub = c.open("s", proto::Role::Subscriber);
    auto pub = c.open("p", proto::Role::Publisher);
    const auto ack = c.broker.subscribe(*sub, "");
    CHECK(c.broker.unsubscribe(*sub, ack.subscription_id));
    frames(*sub);
    c.broker.route(event_from("p", 1), *pub);
    CHECK(only<proto::Notify>(frames(*sub)).empty());
}

TEST_CASE("a slow subscriber loses only its own deliveries")
{
    BrokerOptions opts;
    opts.queue_cap = 5;
    Core c(opts);
    auto slow = c.open("slow", proto::Role::Subscriber);
    auto fast = c.open("fast", proto::Role::Subscriber);
    auto pub = c.open("p", proto::Role::Publisher);
    c.broker.subscribe(*slow, "");
    c.broker.subscribe(*fast, "");
    frames(*slow);
    frames(*fast);
    std::size_t fast_got = 0;
    for (int i = 1; i <= 20; ++i) {
        c.broker.route(event_from("p", i), *pub);
        fast_got += only<proto::Notify>(frames(*fast)).size();
    }
    CHECK(fast_got == 20);
    const auto kept = only<proto::Notify>(frames(*slow));
    REQUIRE(kept.size() == 5);
    // Drop-newest keeps the oldest frames in order.
    for (std::size_t i = 0; i < kept.size(); ++i) {
        CHECK(kept[i].event.seq == static_cast<std::int64_t>(i + 1));
    }
    CHECK(c.broker.stats().drops == 15);
}

TEST_CASE("presence transitions follow the silence thresholds")
{
    Core c;
    auto sub = c.open("watcher", proto::Role::Subscriber);
    auto pub = c.broker.open_session({"v1", proto::Role::Publisher, "phone"});
    auto fresh = only<proto::Presence>(frames(*sub));
    REQUIRE(fresh.size() == 1);
    CHECK(fresh[0].state == proto::PresenceState::Fresh);

    c.clock->advance(15'000);
    CHECK(c.broker.heartbeat_scan(c.clock->now_ms()).empty());
    c.clock->advance(1'000);
    auto t = c.broker.heartbeat_scan(c.clock->now_ms());
    REQUIRE(t.size() == 1);
    CHECK(t[0].state == proto::PresenceState::Stale);
    CHECK(c.broker.heartbeat_scan(c.clock->now_ms()).empty());

    // A heartbeat revives a stale publisher.
    c.broker.heartbeat(*pub);
    auto back = only<proto::Presence>(frames(*sub));
    REQUIRE(back.size() == 2);
    CHECK(back[0].state == proto::PresenceState::Stale);
    CHECK(back[1].state == proto::PresenceState::Fresh);

    c.clock->advance(61'000);
    t = c.broker.heartbeat_scan(c.clock->now_ms());
    REQUIRE(t.size() == 2);
    CHECK(t[0].state == proto::PresenceState::Stale);
    CHECK(t[1].state == proto::PresenceState::Gone);
    CHECK(c.broker.presence().empty());
}

TEST_CASE("presence carries the last reported position")
{
    Core c;
    auto pub = c.open("phone", proto::Role::Publisher);
    auto e = event_from("phone", 1);
    e.position = {59.9, 10.7, 4};
    c.broker.route(e, *pub);
    CHECK(c.broker.presence().at("phone").last_position == e.position);
    c.clock->advance(16'000);
    const auto t = c.broker.heartbeat_scan(c.clock->now_ms());
    REQUIRE(t.size() == 1);
    CHECK(t[0].position == e.position);
}

TEST_CASE("BYE announces GONE immediately; a dropped connection does not")
{
    Core c;
    auto sub = c.open("watcher", proto::Role::Subscriber);
    auto p1 = c.open("p1", proto::Role::Publisher);
    auto p2 = c.open("p2", proto::Role::Publisher);
    frames(*sub);

    CHECK_FALSE(c.broker.handle(*p1, proto::Bye{}));
    auto gone = only<proto::Presence>(frames(*sub));
    REQUIRE(gone.size() == 1);
    CHECK(gone[0].publisher_id == "p1");
    CHECK(gone[0].state == proto::PresenceState::Gone);

    c.broker.disconnect(*p2, false);
    CHECK(only<proto::Presence>(frames(*sub)).empty());
    CHECK(c.broker.presence().count("p2") == 1);
    c.clock->advance(60'001);
    c.broker.heartbeat_scan(c.clock->now_ms());
    CHECK(c.broker.presence().count("p2") == 0);
}

TEST_CASE("a dropped publisher goes stale like a silent one")
{
    Core c;
    auto sub = c.open("watcher", proto::Role::Subscriber);
    auto pub = c.open("p", proto::Role::Publisher);
    frames(*sub);
    c.broker.disconnect(*pub, false);
    c.clock->advance(15'001);
    const auto t = c.broker.heartbeat_scan(c.clock->now_ms());
    REQUIRE(t.size() == 1);
    CHECK(t[0].publisher_id == "p");
    CHECK(t[0].state == proto::PresenceState::Stale);
}

TEST_CASE("three subscribers, two matching, two deliveries")
{
    Core c;
    auto a = c.open("a", proto::Role::Subscriber);
    auto b = c.open("b", proto::Role::Subscriber);
    auto d = c.open("d", proto::Role::Subscriber);
    auto pub = c.open("p", proto::Role::Publisher);
    c.broker.subscribe(*a, "kind=THERMOMETER");
    c.broker.subscribe(*b, "kind=LIGHT");
    c.broker.subscribe(*d, "value>=20");
    const auto r = c.broker.route(event_from("p", 1), *pub);
    CHECK(r.delivered == 2);
    CHECK(r.dropped == 0);
}

TEST_CASE("disconnect removes the session's subscriptions")
{
    Core c;
    auto sub = c.open("s", proto::Role::Subscriber);
    c.broker.subscribe(*sub, "");
    c.broker.subscribe(*sub, "kind=GPS");
    CHECK(c.broker.registry().size() == 2);
    c.broker.disconnect(*sub, false);
    CHECK(c.broker.registry().size() == 0);
    CHECK(c.broker.stats().active_sessions == 0);
}

TEST_CASE("shutdown tells every subscriber that every publisher is gone")
{
    Core c;
    auto sub = c.open("s", proto::Role::Subscriber);
    c.open("p1", proto::Role::Publisher);
    c.open("p2", proto::Role::Publisher);
    frames(*sub);
    c.broker.shutdown_all();
    const auto gone = only<proto::Presence>(frames(*sub));
    CHECK(gone.size() == 2);
    for (const auto& g : gone) {
        CHECK(g.state == proto::PresenceState::Gone);
    }
    CHECK(sub->outbox.closed());
}

TEST_CASE("per-publisher order holds under concurrent publishers")
{
    Core c(BrokerOptions{100'000, 64, 15'000, 60'000});
    auto sub = c.open("s", proto::Role::Subscriber);
    c.broker.subscribe(*sub, "");
    frames(*sub);
    std::vector<SessionPtr> pubs;
    for (int i = 0; i < 4; ++i) {
        pubs.push_back(c.open("p" + std::to_string(i), proto::Role::Publisher));
    }
    frames(*sub);
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i) {
        threads.emplace_back([&, i] {
            for (int seq = 1; seq <= 2000; ++seq) {
                c.broker.route(event_from(pubs[static_cast<std::size_t>(i)]->client_id, seq), *pubs[static_cast<std::size_t>(i)]);
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    std::map<std::string, std::int64_t> last;
    std::size_t count = 0;
    for (const auto& n : only<proto::Notify>(frames(*sub))) {
        CHECK(n.event.seq == last[n.event.publisher_id] + 1);
        last[n.event.publisher_id] = n.event.seq;
        ++count;
    }
    CHECK(count == 8000);
}

// ---------------------------------------------------------------------------
// Over TCP

namespace {

struct RawConn {
    net::Socket sock;
    net::LineReader reader;

    explicit RawConn(std::uint16_t port)
        : sock(net::connect_tcp({"127.0.0.1", port}, 2000))
        , reader(sock.fd(), 1 << 20)
    {
    }
    void send(const std::string& s) { net::write_all(sock.fd(), s); }
    std::optional<std::string> line(int timeout_ms = 2000)
    {
        std::string out;
        if (reader.read_line(out, timeout_ms) == net::LineReader::Status::Line) {
            return out;
        }
        return std::nullopt;
    }
    bool closed_by_peer(int timeout_ms = 2000)
    {
        std::string out;
        for (;;) {
            const auto st = reader.read_line(out, timeout_ms);
            if (st == net::LineReader::Status::Eof || st == net::LineReader::Status::Error) {
                return true;
            }
            if (st == net::LineReader::Status::Timeout) {
                return false;
            }
        }
    }
};

ServerOptions ephemeral()
{
    ServerOptions o;
    o.port = 0;
    o.scan_interval = 50ms;
    return o;
}

}  // namespace

TEST_CASE("server refuses a connection whose first frame is not HELLO")
{
    BrokerServer server(ephemeral());
    server.start();
    RawConn c(server.port());
    c.send(proto::encode_frame(proto::Subscribe{""}));
    const auto reply = c.line();
    REQUIRE(reply.has_value());
    const auto f = proto::decode_frame(*reply);
    REQUIRE(std::holds_alternative<proto::Error>(f));
    CHECK(std::get<proto::Error>(f).code == "ExpectedHello");
    CHECK(c.closed_by_peer());
    server.stop();
}

TEST_CASE("server answers a version mismatch with an error and closes")
{
    BrokerServer server(ephemeral());
    server.start();
    RawConn c(server.port());
    c.send(proto::encode_frame(proto::Hello{"v9", proto::Role::Publisher, "x"}));
    const auto reply = c.line();
    REQUIRE(reply.has_value());
    CHECK(std::get<proto::Error>(proto::decode_frame(*reply)).code == "VersionMismatch");
    CHECK(c.closed_by_peer());
    server.stop();
}

TEST_CASE("a malformed frame closes only the offending session")
{
    BrokerServer server(ephemeral());
    server.start();
    RawConn bad(server.port());
    bad.send(proto::encode_frame(proto::Hello{"v1", proto::Role::Subscriber, "raw"}));
    REQUIRE(bad.line().has_value());
    RawConn good(server.port());
    good.send(proto::encode_frame(proto::Hello{"v1", proto::Role::Subscriber, "ok"}));
    REQUIRE(good.line().has_value());

    bad.send("{this is not json}\n");
    auto reply = bad.line();
    REQUIRE(reply.has_value());
    CHECK(std::get<proto::Error>(proto::decode_frame(*reply)).code == "MalformedFrame");
    CHECK(bad.closed_by_peer());

    good.send(proto::encode_frame(proto::Subscribe{"kind=GPS"}));
    reply = good.line();
    REQUIRE(reply.has_value());
    CHECK(std::holds_alternative<proto::SubscribeAck>(proto::decode_frame(*reply)));
    server.stop();
}

TEST_CASE("server closes a session that sends an oversize frame")
{
    BrokerServer server(ephemeral());
    server.start();
    RawConn c(server.port());
    c.send(proto::encode_frame(proto::Hello{"v1", proto::Role::Subscriber, "big"}));
    REQUIRE(c.line().has_value());
    c.send(std::string(proto::kMaxFrameBytes + 10, 'x') + "\n");
    auto reply = c.line();
    REQUIRE(reply.has_value());
    CHECK(std::get<proto::Error>(proto::decode_frame(*reply)).code == "OversizeFrame");
    CHECK(c.closed_by_peer());
    server.stop();
}

TEST_CASE("starting on an occupied port fails")
{
    BrokerServer a(ephemeral());
    a.start();
    auto opts = ephemeral();
    opts.port = a.port();
    BrokerServer b(opts);
    CHECK_THROWS_AS(b.start(), std::system_error);
    a.stop();
}

TEST_CASE("server scan marks a silent publisher stale on a manual clock")
{
    auto clock = std::make_shared<ManualClock>(5'000'000);
    BrokerServer server(ephemeral(), clock);
    server.start();
    RawConn watcher(server.port());
    watcher.send(proto::encode_frame(proto::Hello{"v1", proto::Role::Subscriber, "w"}));
    REQUIRE(watcher.line().has_value());
    RawConn phone(server.port());
    phone.send(proto::encode_frame(proto::Hello{"v1", proto::Role::Publisher, "phone"}));
    REQUIRE(phone.line().has_value());
    auto fresh = watcher.line();
    REQUIRE(fresh.has_value());
    CHECK(std::get<proto::Presence>(proto::decode_frame(*fresh)).state == proto::PresenceState::Fresh);
    clock->advance(16'000);
    auto stale = watcher.line();
    REQUIRE(stale.has_value());
    CHECK(std::get<proto::Presence>(proto::decode_frame(*stale)).state == proto::PresenceState::Stale);
    server.stop();
}
