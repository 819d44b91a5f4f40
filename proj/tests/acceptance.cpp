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
// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when
// any criterion fails.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "rescue/aggregate.hpp"
#include "rescue/broker.hpp"
#include "rescue/client.hpp"
#include "rescue/edge.hpp"
#include "rescue/loadtest.hpp"
#include "rescue/predicate.hpp"
#include "rescue/sim.hpp"
#include "rescue/store.hpp"
#include "support.hpp"

using namespace rescue;
using namespace std::chrono_literals;
using Steady = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Checker {
    bool ok = true;
    std::ostringstream why;

    void require(bool cond, const std::string& what)
    {
        if (!cond) {
            if (!ok) {
                why << "; ";
            }
            ok = false;
            why << what;
        }
    }
    Outcome done(const std::string& summary) const { return {ok, ok ? summary : why.str()}; }
};

broker::ServerOptions ephemeral()
{
    broker::ServerOptions o;
    o.port = 0;
    return o;
}

std::filesystem::path scenario_path()
{
    return std::filesystem::path(RESCUE_SCENARIO_DIR) / "shipfire-small.json";
}

// ---------------------------------------------------------------------------

Outcome fan_out()
{
    broker::BrokerServer server(ephemeral());
    server.start();
    loadtest::Options o;
    o.broker = server.endpoint();
    o.publishers = 1;
    o.subscribers = 30;
    o.rate_hz = 5.0;
    o.duration_s = 60.0;
    const auto r = loadtest::run(o);
    const auto drops = server.core().stats().drops;
    server.stop();

    Checker c;
    c.require(r.errors.empty(), "errors: " + (r.errors.empty() ? "" : r.errors.front()));
    c.require(r.published == 300, "published " + std::to_string(r.published) + " of 300");
    c.require(r.lost == 0 && r.received == r.expected,
              "received " + std::to_string(r.received) + " of " + std::to_string(r.expected));
    c.require(drops == 0 && r.client_drops == 0, "drops " + std::to_string(drops + r.client_drops));
    c.require(r.order_violations == 0, std::to_string(r.order_violations) + " order violations");
    c.require(r.p95_ms < 250.0, "p95 " + std::to_string(r.p95_ms) + " ms");
    c.require(r.elapsed_s < 120.0, "runtime " + std::to_string(r.elapsed_s) + " s");
    std::ostringstream s;
    s << r.received << "/" << r.expected << " delivered, 0 drops, 0 order violations, p95 " << r.p95_ms
      << " ms, runtime " << r.elapsed_s << " s";
    return c.done(s.str());
}

Outcome five_sensor_end_to_end()
{
    broker::BrokerServer server(ephemeral());
    server.start();
    agg::ServiceOptions so;
    so.broker = server.endpoint();
    agg::AggregationService service(so);
    service.start();

    const auto spec = sim::load_scenario(scenario_path());
    sim::RunOptions ro;
    ro.broker = server.endpoint();
    ro.virtual_clock = true;
    const auto report = sim::run_scenario(spec, ro);
    testing::eventually([&] { return service.store().size() >= report.total(); }, 10000ms);

    std::map<std::string, std::map<SensorKind, std::uint64_t>> stored;
    bool units_ok = true;
    service.store().for_each([&](const agg::StoredEvent& se) {
        stored[se.event.publisher_id][se.event.kind]++;
        units_ok &= se.event.unit == unit_for(se.event.kind);
    });
    service.stop();
    server.stop();

    Checker c;
    c.require(report.errors() == 0, "agent errors");
    c.require(units_ok, "unit mismatch in store");
    std::set<SensorKind> seen;
    for (const auto& a : report.agents) {
        for (auto k : kAllKinds) {
            const auto want = a.published.count(k) ? a.published.at(k) : 0;
            const auto got = stored[a.agent_id][k];
            c.require(want == got, a.agent_id + " " + std::string(to_string(k)) + ": report " + std::to_string(want) +
                                       ", store " + std::to_string(got));
            if (got > 0) {
                seen.insert(k);
            }
        }
    }
    c.require(seen.size() == kAllKinds.size(), "only " + std::to_string(seen.size()) + " kinds stored");
    std::ostringstream s;
    s << "all 6 kinds stored with correct units; per-agent per-kind counts equal the run report (" << report.total()
      << " events)";
    return c.done(s.str());
}

Outcome matching_oracle()
{
    Checker c;
    testing::Gen gen(20260419);
    const std::vector<std::string> pubs{"a", "phone-2", "ic-00ff"};
    constexpr int kPairs = 20'000;
    int agree = 0;
    for (int i = 0; i < kPairs; ++i) {
        const auto text = gen.predicate(pubs);
        const auto e = gen.event(pubs, i + 1);
        agree += matches(parse_predicate(text), e) == testing::NaiveMatcher::matches(text, canonical_encode(e));
    }
    c.require(agree == kPairs, std::to_string(kPairs - agree) + " disagreements");

    // Registry churn while routing: each routed event is checked against a
    // brute-force scan of the same snapshot the router used.
    auto clock = std::make_shared<ManualClock>(0);
    broker::Broker core({1 << 20, 64, 15'000, 60'000}, clock);
    std::atomic<bool> stop{false};
    std::vector<broker::SessionPtr> subs;
    for (int i = 0; i < 8; ++i) {
        subs.push_back(core.open_session({"v1", proto::Role::Subscriber, "sub-" + std::to_string(i)}));
    }
    std::thread churn([&] {
        testing::Gen g(99);
        while (!stop.load()) {
            auto& s = *subs[static_cast<std::size_t>(g.integer(0, 7))];
            if (g.coin(0.6) && core.registry().count_for(s.id) < 32) {
                core.subscribe(s, g.predicate({"p"}));
            } else {
                const auto snap = core.registry().snapshot();
                for (std::size_t k = 0; k < snap->owners.size(); ++k) {
                    if (snap->owners[k] == s.id) {
                        core.unsubscribe(s, snap->predicates[k].subscription_id);
                        break;
                    }
                }
            }
        }
    });
    auto pub = core.open_session({"v1", proto::Role::Publisher, "p"});
    int checked = 0, mismatches = 0;
    for (int i = 1; i <= 2000; ++i) {
        const auto e = gen.event({"p"}, i);
        const auto snap = core.registry().snapshot();
        std::vector<std::string> brute;
        for (const auto& p : snap->predicates) {
            if (matches(p, e)) {
                brute.push_back(p.subscription_id);
            }
        }
        mismatches += match_all(snap->predicates, e) != brute;
        core.route(e, *pub);
        ++checked;
    }
    stop.store(true);
    churn.join();
    c.require(mismatches == 0, std::to_string(mismatches) + " match_all mismatches under churn");
    std::ostringstream s;
    s << kPairs << "/" << kPairs << " pairs agree with the naive evaluator; match_all equals brute force on " << checked
      << " routed events under churn";
    return c.done(s.str());
}

Outcome activity_recognition()
{
    Checker c;
    const auto still = edge::classify_activity(edge::AccelWindow(std::vector<Vec3>(edge::kWindowSize, Vec3{0, 0, 1})));
    c.require(still.state == ActivityState::Still && still.confidence == 100,
              "noiseless window gave " + edge::describe_activity(still));

    std::ostringstream s;
    s << "noiseless -> " << edge::describe_activity(still) << ";";
    for (auto state : {ActivityState::Still, ActivityState::Walking, ActivityState::Running}) {
        int hits = 0;
        for (std::uint64_t seed = 1; seed <= 200; ++seed) {
            const auto t = sim::accel_trace(state, 2.56, seed * 1'000'003ULL + static_cast<std::uint64_t>(state));
            hits += edge::classify_activity(edge::AccelWindow(t)).state == state;
        }
        c.require(hits >= 190, std::string(to_string(state)) + " " + std::to_string(hits) + "/200");
        s << " " << to_string(state) << " " << hits << "/200";
    }

    int exact_one = 0, clean_zero = 0;
    constexpr int kFallTraces = 60;
    const ActivityState before[] = {ActivityState::Still, ActivityState::Walking, ActivityState::Running};
    for (int i = 0; i < kFallTraces; ++i) {
        const auto seed = static_cast<std::uint64_t>(i) + 500;
        const auto state = before[i % 3];
        const double at = 3.0 + 0.37 * (i % 7);
        exact_one += edge::detect_falls(sim::accel_trace(state, 20.0, seed, at), 0).size() == 1;
        clean_zero += edge::detect_falls(sim::accel_trace(state, 20.0, seed), 0).empty();
    }
    c.require(exact_one == kFallTraces, std::to_string(exact_one) + "/" + std::to_string(kFallTraces) +
                                            " fall traces gave exactly one alert");
    c.require(clean_zero == kFallTraces, std::to_string(clean_zero) + "/" + std::to_string(kFallTraces) +
                                             " clean traces gave no alert");
    s << "; falls " << exact_one << "/" << kFallTraces << " exactly one alert, clean " << clean_zero << "/"
      << kFallTraces << " none";
    return c.done(s.str());
}

Outcome staleness()
{
    const auto t0 = Steady::now();
    auto clock = std::make_shared<ManualClock>(1'700'000'000'000);
    broker::Broker core({}, clock);
    auto watcher = core.open_session({"v1", proto::Role::Subscriber, "map"});
    auto phone = core.open_session({"v1", proto::Role::Publisher, "phone"});
    watcher->outbox.drain();

    auto presence_states = [&] {
        std::vector<proto::PresenceState> out;
        for (const auto& line : watcher->outbox.drain()) {
            const auto frame = proto::decode_frame(line);
            if (const auto* p = std::get_if<proto::Presence>(&frame)) {
                out.push_back(p->state);
            }
        }
        return out;
    };

    Checker c;
    clock->advance(16'000);
    core.heartbeat_scan(clock->now_ms());
    const auto at16 = presence_states();
    c.require(at16 == std::vector{proto::PresenceState::Stale}, "no single STALE broadcast at 16 s");
    clock->advance(45'000);  // 61 s of silence
    core.heartbeat_scan(clock->now_ms());
    const auto at61 = presence_states();
    c.require(at61 == std::vector{proto::PresenceState::Gone}, "no single GONE broadcast at 61 s");
    c.require(core.presence().count("phone") == 0, "presence record not removed");
    const auto elapsed = std::chrono::duration<double>(Steady::now() - t0).count();
    c.require(elapsed < 1.0, "runtime " + std::to_string(elapsed) + " s");
    std::ostringstream s;
    s << "16 s -> STALE, 61 s -> GONE and record removed, runtime " << elapsed * 1000 << " ms";
    return c.done(s.str());
}

struct Query {
    bool heat = false;
    SensorKind kind = SensorKind::Thermometer;
    BoundingBox box;
    int rows = 1, cols = 1;
    std::string publisher;
    std::size_t max_points = 2;
    std::int64_t from = 0, to = 0;
};

std::string answer(const agg::EventStore& store, const Query& q)
{
    if (q.heat) {
        return agg::to_json(agg::heatmap(store, q.kind, q.box, q.rows, q.cols, q.from, q.to)).dump();
    }
    return agg::to_json(agg::query_series(store, q.publisher, q.kind, q.from, q.to, q.max_points)).dump();
}

Outcome aggregation_conservation()
{
    Checker c;
    testing::TempDir dir;
    testing::Gen gen(8675309);
    int trials = 0;
    std::uint64_t events_total = 0, queries_total = 0;
    for (int t = 0; t < 25; ++t) {
        const auto path = dir.path() / ("store-" + std::to_string(t) + ".log");
        std::vector<SensorEvent> published;
        std::vector<std::pair<Query, std::string>> answers;
        {
            agg::AggregationService svc(agg::ServiceOptions{std::nullopt, path});
            const int n = gen.integer(1, 3000);
            for (int i = 1; i <= n; ++i) {
                published.push_back(gen.event({"a", "b", "c"}, i));
                svc.ingest_event(published.back());
            }
            events_total += static_cast<std::uint64_t>(n);

            for (const auto& e : published) {
                const auto raw = svc.store().raw(e.event_id);
                c.require(raw && *raw == canonical_encode(e), "raw mismatch for " + e.event_id);
            }
            for (int i = 0; i < 10; ++i) {
                Query q;
                q.kind = static_cast<SensorKind>(gen.integer(0, 5));
                q.from = 1'700'000'000'000 + gen.integer(-10, 3'600'000);
                q.to = q.from + gen.integer(0, 3'600'000);

                q.heat = true;
                const double lat0 = gen.real(-2.5, 1.5), lon0 = gen.real(-2.5, 1.5);
                q.box = {lat0, lon0, lat0 + gen.real(0.05, 3), lon0 + gen.real(0.05, 3)};
                q.rows = gen.integer(1, 64);
                q.cols = gen.integer(1, 64);
                const auto map = agg::heatmap(svc.store(), q.kind, q.box, q.rows, q.cols, q.from, q.to);
                std::uint64_t qualifying = 0;
                for (const auto& e : published) {
                    qualifying += e.kind == q.kind && e.timestamp_ms >= q.from && e.timestamp_ms <= q.to &&
                                  q.box.contains(e.position.lat, e.position.lon);
                }
                c.require(map.total() == qualifying,
                          "heat map " + std::to_string(map.total()) + " vs " + std::to_string(qualifying));
                answers.emplace_back(q, answer(svc.store(), q));

                q.heat = false;
                q.publisher = gen.coin() ? "a" : "b";
                q.max_points = static_cast<std::size_t>(gen.integer(2, 50));
                const auto raw = svc.store().range(q.publisher, q.kind, q.from, q.to);
                const auto series = agg::query_series(svc.store(), q.publisher, q.kind, q.from, q.to, q.max_points);
                std::uint64_t sum = 0;
                if (series.downsampled) {
                    for (const auto& b : series.buckets) {
                        sum += b.count;
                    }
                } else {
                    sum = series.raw.size();
                }
                c.require(sum == raw.size(), "series " + std::to_string(sum) + " vs raw " + std::to_string(raw.size()));
                answers.emplace_back(q, answer(svc.store(), q));
            }
        }
        agg::AggregationService again(agg::ServiceOptions{std::nullopt, path});
        c.require(again.store().size() == published.size(), "restart lost events");
        std::size_t same = 0;
        for (const auto& [q, before] : answers) {
            same += answer(again.store(), q) == before;
        }
        for (const auto& e : published) {
            const auto raw = again.store().raw(e.event_id);
            c.require(raw && *raw == canonical_encode(e), "raw mismatch after restart for " + e.event_id);
        }
        c.require(same == answers.size(), std::to_string(answers.size() - same) + " answers changed after restart");
        queries_total += answers.size();
        ++trials;
    }
    std::ostringstream s;
    s << trials << " randomized sets (" << events_total << " events, " << queries_total
      << " queries): heat-map sums, series sums, byte-identical raw retrieval and post-restart answers hold";
    return c.done(s.str());
}

Outcome decoupled_addressing()
{
    broker::BrokerServer server(ephemeral());
    struct Line {
        std::uint64_t session;
        std::string client_id;
        proto::Role role;
        broker::Direction dir;
        std::string text;
    };
    std::mutex mutex;
    std::vector<Line> transcript;
    server.core().set_transcript([&](const broker::Session& s, broker::Direction d, std::string_view line) {
        std::lock_guard lock(mutex);
        transcript.push_back({s.id, s.client_id, s.role, d, std::string(line)});
    });
    server.start();

    // Two subscribers with distinctive identities, then a short scenario.
    std::vector<std::unique_ptr<client::Client>> subs;
    std::vector<std::string> sub_ids, subscription_ids;
    for (int i = 0; i < 2; ++i) {
        client::ClientConfig cc;
        cc.broker = server.endpoint();
        cc.role = proto::Role::Subscriber;
        cc.client_id = "tablet-" + std::to_string(i) + "-" + client::generate_client_id();
        subs.push_back(client::Client::connect(cc));
        sub_ids.push_back(cc.client_id);
        subscription_ids.push_back(subs.back()->subscribe(""));
        subscription_ids.push_back(subs.back()->subscribe("kind=THERMOMETER"));
    }
    auto spec = sim::load_scenario(scenario_path());
    spec.duration_s = 20.0;
    sim::RunOptions ro;
    ro.broker = server.endpoint();
    ro.virtual_clock = true;
    const auto report = sim::run_scenario(spec, ro);
    testing::eventually([&] { return server.core().stats().events_routed >= report.total(); }, 10000ms);
    for (auto& s : subs) {
        s->close();
    }
    server.stop();

    Checker c;
    std::set<std::string> publisher_ids;
    for (const auto& a : spec.agents) {
        publisher_ids.insert(a.agent_id);
    }
    const std::string host = server.endpoint().host;
    const std::string broker_port = std::to_string(server.port());
    std::size_t to_publishers = 0, to_subscribers = 0;
    std::lock_guard lock(mutex);
    for (const auto& l : transcript) {
        if (l.dir != broker::Direction::Out) {
            continue;
        }
        // No frame carries a transport address of any party.
        c.require(l.text.find(host) == std::string::npos, "address in: " + l.text.substr(0, 80));
        for (const char* key : {"\"address\"", "\"host\"", "\"port\"", "\"peer\"", "\"remote\""}) {
            c.require(l.text.find(key) == std::string::npos, std::string("key ") + key + " in frame");
        }
        if (proto::can_subscribe(l.role)) {
            ++to_subscribers;
            continue;
        }
        ++to_publishers;
        for (const auto& id : sub_ids) {
            c.require(l.text.find(id) == std::string::npos, "subscriber id sent to publisher " + l.client_id);
        }
        for (const auto& sid : subscription_ids) {
            c.require(l.text.find("\"" + sid + "\"") == std::string::npos,
                      "subscription id sent to publisher " + l.client_id);
        }
        const auto type = std::string(proto::type_name(proto::decode_frame(l.text)));
        c.require(type == "HELLO_ACK" || type == "ERROR", type + " frame sent to a publisher");
    }
    c.require(to_publishers >= spec.agents.size(), "transcript has no publisher-bound frames");
    c.require(to_subscribers > 0, "transcript has no subscriber-bound frames");
    std::ostringstream s;
    s << transcript.size() << " transcript lines; " << to_publishers << " publisher-bound and " << to_subscribers
      << " subscriber-bound frames carry no peer identity or address";
    return c.done(s.str());
}

Outcome live_demo()
{
    broker::BrokerServer server(ephemeral());
    server.start();
    client::ClientConfig cc;
    cc.broker = server.endpoint();
    cc.role = proto::Role::Subscriber;
    cc.client_id = "tablet";
    auto tablet = client::Client::connect(cc);
    tablet->subscribe("");

    std::map<std::string, std::map<SensorKind, std::uint64_t>> tally;
    std::atomic<bool> done{false};
    std::uint64_t alerts = 0;
    std::thread reader([&] {
        while (true) {
            auto d = tablet->next(200ms);
            if (!d) {
                if (done.load()) {
                    break;
                }
                continue;
            }
            if (auto* n = std::get_if<proto::Notify>(&*d)) {
                tally[n->event.publisher_id][n->event.kind]++;
                alerts += n->event.alert.has_value();
            }
        }
    });

    const auto spec = sim::load_scenario(scenario_path());
    sim::RunOptions ro;
    ro.broker = server.endpoint();
    const auto t0 = Steady::now();
    const auto report = sim::run_scenario(spec, ro);
    const auto elapsed = std::chrono::duration<double>(Steady::now() - t0).count();
    testing::eventually([&] { return server.core().stats().deliveries >= report.total(); }, 5000ms);
    std::this_thread::sleep_for(300ms);
    done.store(true);
    reader.join();
    const auto drops = server.core().stats().drops + tablet->dropped_deliveries();
    tablet->close();
    server.stop();

    Checker c;
    c.require(spec.agents.size() == 4, "scenario does not have 4 agents");
    c.require(report.errors() == 0, std::to_string(report.errors()) + " agent errors");
    c.require(drops == 0, std::to_string(drops) + " drops");
    c.require(elapsed >= spec.duration_s - 1.0, "run took only " + std::to_string(elapsed) + " s");
    std::uint64_t report_alerts = 0, received = 0;
    for (const auto& a : report.agents) {
        report_alerts += a.fall_alerts;
        for (auto k : kAllKinds) {
            const auto want = a.published.count(k) ? a.published.at(k) : 0;
            const auto got = tally[a.agent_id][k];
            received += got;
            c.require(want == got, a.agent_id + " " + std::string(to_string(k)) + ": published " +
                                       std::to_string(want) + ", received " + std::to_string(got));
        }
    }
    c.require(alerts == report_alerts, "fall alerts " + std::to_string(alerts) + " vs " + std::to_string(report_alerts));
    std::ostringstream s;
    s << "4 publishers + 1 subscriber for " << elapsed << " s: " << received << "/" << report.total()
      << " events tallied, " << alerts << " fall alert(s), 0 errors";
    return c.done(s.str());
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"fan-out 1x30 at 5/s for 60 s", fan_out},
        {"five-sensor end-to-end", five_sensor_end_to_end},
        {"matching oracle equivalence", matching_oracle},
        {"activity recognition", activity_recognition},
        {"staleness on a virtual clock", staleness},
        {"aggregation conservation", aggregation_conservation},
        {"decoupled addressing", decoupled_addressing},
        {"five-client live demo", live_demo},
    };
    int failed = 0;
    int index = 0;
    for (const auto& [name, fn] : criteria) {
        ++index;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", index, name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
