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

// rescue: broker, publish, subscribe, simulate, aggregate, loadtest.

#include <algorithm>
#include <cctype>
#include <csignal>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "rescue/aggregate.hpp"
#include "rescue/broker.hpp"
#include "rescue/client.hpp"
#include "rescue/http_api.hpp"
#include "rescue/loadtest.hpp"
#include "rescue/sim.hpp"

using namespace rescue;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::mutex g_stop_mutex;
std::condition_variable g_stop_cv;
bool g_stop = false;

bool stop_requested()
{
    std::lock_guard lock(g_stop_mutex);
    return g_stop;
}

void wait_for_stop()
{
    std::unique_lock lock(g_stop_mutex);
    g_stop_cv.wait(lock, [] { return g_stop; });
}

/// SIGINT/SIGTERM are blocked in every thread and collected here.
void start_signal_thread()
{
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::thread([set] {
        int sig = 0;
        sigwait(&set, &sig);
        {
            std::lock_guard lock(g_stop_mutex);
            g_stop = true;
        }
        g_stop_cv.notify_all();
    }).detach();
}

int fail(int code, std::string_view error, const std::string& message)
{
    ordered_json j{{"error", error}, {"message", message}, {"exit", code}};
    std::cerr << j.dump() << std::endl;
    return code;
}

/// Distinct exit codes for SDK failures; a bad predicate is a usage error.
int exit_code(client::ClientErrc code)
{
    if (code == client::ClientErrc::InvalidPredicate) {
        return kExitUsage;
    }
    return 10 + static_cast<int>(code);
}

int fail(const client::ClientError& e)
{
    return fail(exit_code(e.code()), client::to_string(e.code()), e.what());
}

net::Endpoint endpoint_or_usage(const std::string& text)
{
    return net::parse_endpoint(text, proto::kDefaultPort);
}

void print_line(const std::string& line)
{
    std::cout << line << '\n' << std::flush;
}

// ---------------------------------------------------------------- broker

struct BrokerArgs {
    std::string host = "127.0.0.1";
    std::uint16_t port = proto::kDefaultPort;
    std::size_t queue_cap = 1024;
    std::size_t max_subscriptions = 64;
    std::int64_t stale_after_ms = 15'000;
    std::int64_t gone_after_ms = 60'000;
    int stats_port = -1;
    bool quiet = false;
};

int run_broker(const BrokerArgs& a)
{
    JsonLog log(a.quiet ? nullptr : &std::cerr);
    broker::ServerOptions opts;
    opts.host = a.host;
    opts.port = a.port;
    opts.broker.queue_cap = a.queue_cap;
    opts.broker.max_subscriptions = a.max_subscriptions;
    opts.broker.stale_after_ms = a.stale_after_ms;
    opts.broker.gone_after_ms = a.gone_after_ms;
    broker::BrokerServer server(opts, std::make_shared<SystemClock>(), &log);
    try {
        server.start();
    } catch (const std::system_error& e) {
        return fail(kExitRuntime, "BindFailed", e.what());
    }
    HttpServer stats;
    ordered_json ready{{"event", "listening"}, {"host", a.host}, {"port", server.port()}};
    if (a.stats_port >= 0) {
        mount_broker_stats(stats, server.core());
        try {
            ready["stats_port"] = stats.start(a.host, static_cast<std::uint16_t>(a.stats_port));
        } catch (const std::system_error& e) {
            server.stop();
            return fail(kExitRuntime, "BindFailed", e.what());
        }
    }
    print_line(ready.dump());
    wait_for_stop();
    stats.stop();
    server.stop();
    print_line(ordered_json{{"event", "stopped"}}.dump());
    return kExitOk;
}

// ---------------------------------------------------------------- publish

struct PublishArgs {
    std::string broker = "127.0.0.1:7470";
    std::string client_id;
    std::string kind;
    std::string value;
    double lat = 0.0;
    double lon = 0.0;
    double accuracy = sim::kGpsAccuracyM;
    std::optional<std::int64_t> timestamp_ms;
    std::string activity;
    std::string from_file;
    double speed = 1.0;
};

SensorValue parse_value(SensorKind kind, const std::string& text)
{
    auto number = [](const std::string& t) {
        std::size_t used = 0;
        const double d = std::stod(t, &used);
        if (used != t.size()) {
            throw std::invalid_argument("trailing characters in '" + t + "'");
        }
        return d;
    };
    if (kind == SensorKind::Accelerometer) {
        std::vector<double> parts;
        std::size_t start = 0;
        while (true) {
            const auto comma = text.find(',', start);
            parts.push_back(number(text.substr(start, comma - start)));
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        if (parts.size() != 3) {
            throw std::invalid_argument("ACCELEROMETER takes --value x,y,z");
        }
        return Vec3{parts[0], parts[1], parts[2]};
    }
    return number(text);
}

std::string upper(std::string text)
{
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::toupper(c); });
    return text;
}

std::optional<ActivityEstimate> parse_activity(const std::string& text)
{
    if (text.empty()) {
        return std::nullopt;
    }
    const auto colon = text.find(':');
    auto state = parse_state(upper(text.substr(0, colon)));
    if (!state) {
        throw std::invalid_argument("unknown activity state in '" + text + "'");
    }
    int confidence = 100;
    if (colon != std::string::npos) {
        confidence = std::stoi(text.substr(colon + 1));
    }
    return ActivityEstimate{*state, confidence};
}

int run_publish(const PublishArgs& a)
{
    std::vector<SensorEvent> recorded;
    std::optional<SensorEvent> single;
    try {
        if (!a.from_file.empty()) {
            std::ifstream in(a.from_file);
            if (!in) {
                return fail(kExitUsage, "BadFile", "cannot open " + a.from_file);
            }
            std::string line;
            std::size_t n = 0;
            while (std::getline(in, line)) {
                ++n;
                if (line.empty()) {
                    continue;
                }
                try {
                    recorded.push_back(canonical_decode(line));
                } catch (const std::exception& e) {
                    return fail(kExitUsage, "BadFile", a.from_file + ":" + std::to_string(n) + ": " + e.what());
                }
            }
        } else {
            if (a.kind.empty() || a.value.empty()) {
                return fail(kExitUsage, "Usage", "--kind and --value are required without --from-file");
            }
            auto kind = parse_kind(upper(a.kind));
            if (!kind) {
                return fail(kExitUsage, "UnknownKind", "unknown kind '" + a.kind + "'");
            }
            SensorEvent e;
            e.kind = *kind;
            e.value = parse_value(*kind, a.value);
            e.position = {a.lat, a.lon, a.accuracy};
            e.timestamp_ms = a.timestamp_ms.value_or(wall_now_ms());
            e.activity = parse_activity(a.activity);
            single = e;
        }
    } catch (const std::exception& e) {
        return fail(kExitUsage, "Usage", e.what());
    }

    client::ClientConfig cfg;
    try {
        cfg.broker = endpoint_or_usage(a.broker);
    } catch (const std::exception& e) {
        return fail(kExitUsage, "Usage", e.what());
    }
    cfg.role = proto::Role::Publisher;
    cfg.client_id = a.client_id.empty() ? client::generate_client_id() : a.client_id;

    try {
        auto c = client::Client::connect(cfg);
        std::uint64_t published = 0;
        if (single) {
            auto e = c->make_event(single->kind, single->value, single->position, single->timestamp_ms,
                                   single->activity);
            c->publish(e);
            published = 1;
        } else {
            // Replays keep the recorded order and spacing (divided by --speed),
            // re-stamped with this client's identity.
            const auto t0 = std::chrono::steady_clock::now();
            const std::int64_t base = recorded.empty() ? 0 : recorded.front().timestamp_ms;
            for (const auto& r : recorded) {
                if (stop_requested()) {
                    break;
                }
                if (a.speed > 0.0) {
                    const auto delta = std::max<std::int64_t>(0, r.timestamp_ms - base);
                    std::this_thread::sleep_until(
                        t0 + std::chrono::microseconds(static_cast<std::int64_t>(delta * 1000.0 / a.speed)));
                }
                auto e = c->make_event(r.kind, r.value, r.position, r.timestamp_ms, r.activity);
                e.alert = r.alert;
                c->publish(e);
                ++published;
            }
        }
        c->close();
        print_line(ordered_json{{"published", published}, {"client_id", cfg.client_id}}.dump());
    } catch (const client::ClientError& e) {
        return fail(e);
    }
    return kExitOk;
}

// ---------------------------------------------------------------- subscribe

struct SubscribeArgs {
    std::string broker = "127.0.0.1:7470";
    std::string client_id;
    std::string filter;
    std::uint64_t count = 0;
    double duration_s = 0.0;
    bool presence = false;
};

int run_subscribe(const SubscribeArgs& a)
{
    try {
        (void)parse_predicate(a.filter);
    } catch (const PredicateError& e) {
        return fail(kExitUsage, "InvalidPredicate", e.what());
    }
    client::ClientConfig cfg;
    try {
        cfg.broker = endpoint_or_usage(a.broker);
    } catch (const std::exception& e) {
        return fail(kExitUsage, "Usage", e.what());
    }
    cfg.role = proto::Role::Subscriber;
    cfg.client_id = a.client_id.empty() ? client::generate_client_id() : a.client_id;
    try {
        auto c = client::Client::connect(cfg);
        c->subscribe(a.filter);
        std::cerr << ordered_json{{"event", "subscribed"}, {"filter", a.filter}}.dump() << std::endl;
        const auto deadline = a.duration_s > 0.0
            ? std::optional(std::chrono::steady_clock::now() +
                            std::chrono::milliseconds(static_cast<std::int64_t>(a.duration_s * 1000)))
            : std::nullopt;
        std::uint64_t printed = 0;
        while (!stop_requested()) {
            if (a.count > 0 && printed >= a.count) {
                break;
            }
            if (deadline && std::chrono::steady_clock::now() >= *deadline) {
                break;
            }
            auto d = c->next(std::chrono::milliseconds(100));
            if (!d) {
                if (c->closed()) {
                    return fail(client::ClientError(client::ClientErrc::SessionClosed, "broker closed the session"));
                }
                continue;
            }
            if (const auto* n = std::get_if<proto::Notify>(&*d)) {
                print_line(canonical_encode(n->event));
                ++printed;
            } else if (a.presence) {
                print_line(proto::encode_presence_body(std::get<proto::Presence>(*d)));
            }
        }
        c->close();
    } catch (const client::ClientError& e) {
        return fail(e);
    }
    return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string scenario;
    std::string broker = "127.0.0.1:7470";
    std::optional<std::uint64_t> seed;
    bool virtual_clock = false;
    double speed = 1.0;
};

int run_simulate(const SimulateArgs& a)
{
    sim::ScenarioSpec spec;
    sim::RunOptions opts;
    try {
        spec = sim::load_scenario(a.scenario);
        opts.broker = endpoint_or_usage(a.broker);
    } catch (const sim::InvalidScenario& e) {
        return fail(kExitUsage, "InvalidScenario", e.what());
    } catch (const std::exception& e) {
        return fail(kExitUsage, "Usage", e.what());
    }
    opts.virtual_clock = a.virtual_clock;
    opts.speed = a.speed;
    opts.seed_override = a.seed;
    try {
        const auto report = sim::run_scenario(spec, opts);
        print_line(report.to_json().dump());
        if (report.errors() > 0) {
            return fail(kExitRuntime, "AgentFailed", std::to_string(report.errors()) + " agent(s) failed");
        }
    } catch (const sim::BrokerUnreachable& e) {
        return fail(exit_code(client::ClientErrc::ConnectionRefused), "BrokerUnreachable", e.what());
    } catch (const sim::InvalidScenario& e) {
        return fail(kExitUsage, "InvalidScenario", e.what());
    }
    return kExitOk;
}

// ---------------------------------------------------------------- aggregate

struct AggregateArgs {
    std::string broker = "127.0.0.1:7470";
    std::string store;
    std::string http_host = "127.0.0.1";
    std::uint16_t http_port = 8080;
    std::string ui_dir;
    std::size_t store_cap = agg::kDefaultStoreCap;
    std::string client_id = "aggregator";
    bool quiet = false;
};

int run_aggregate(const AggregateArgs& a)
{
    JsonLog log(a.quiet ? nullptr : &std::cerr);
    agg::ServiceOptions opts;
    try {
        opts.broker = endpoint_or_usage(a.broker);
    } catch (const std::exception& e) {
        return fail(kExitUsage, "Usage", e.what());
    }
    if (!a.store.empty()) {
        opts.store_path = a.store;
    }
    opts.store_cap = a.store_cap;
    opts.client_id = a.client_id;

    std::unique_ptr<agg::AggregationService> service;
    try {
        service = std::make_unique<agg::AggregationService>(opts, &log);
    } catch (const std::exception& e) {
        return fail(kExitRuntime, "StoreError", e.what());
    }
    HttpServer http;
    std::optional<std::filesystem::path> ui;
    if (!a.ui_dir.empty()) {
        ui = a.ui_dir;
    }
    mount_aggregation_api(http, *service, ui);
    try {
        service->start();
    } catch (const client::ClientError& e) {
        return fail(e);
    }
    std::uint16_t port = 0;
    try {
        port = http.start(a.http_host, a.http_port);
    } catch (const std::system_error& e) {
        service->stop();
        return fail(kExitRuntime, "BindFailed", e.what());
    }
    print_line(ordered_json{{"event", "listening"}, {"http_port", port}, {"stored", service->store().size()}}.dump());
    wait_for_stop();
    http.stop();
    service->stop();
    print_line(ordered_json{{"event", "stopped"}}.dump());
    return kExitOk;
}

// ---------------------------------------------------------------- loadtest

struct LoadtestArgs {
    std::string broker;
    bool embedded = false;
    std::size_t queue_cap = 1024;
    loadtest::Options opts;
    bool fail_on_loss = false;
};

int run_loadtest(LoadtestArgs a)
{
    std::unique_ptr<broker::BrokerServer> embedded;
    if (a.embedded || a.broker.empty()) {
        broker::ServerOptions so;
        so.port = 0;
        so.broker.queue_cap = a.queue_cap;
        embedded = std::make_unique<broker::BrokerServer>(so);
        try {
            embedded->start();
        } catch (const std::system_error& e) {
            return fail(kExitRuntime, "BindFailed", e.what());
        }
        a.opts.broker = embedded->endpoint();
    } else {
        try {
            a.opts.broker = endpoint_or_usage(a.broker);
        } catch (const std::exception& e) {
            return fail(kExitUsage, "Usage", e.what());
        }
    }
    loadtest::Report report;
    try {
        report = loadtest::run(a.opts);
    } catch (const client::ClientError& e) {
        if (embedded) {
            embedded->stop();
        }
        return fail(exit_code(e.code()), "BrokerUnreachable", e.what());
    }
    auto j = report.to_json();
    if (embedded) {
        const auto s = embedded->core().stats();
        j["broker"] = {{"events_routed", s.events_routed}, {"deliveries", s.deliveries}, {"drops", s.drops}};
        embedded->stop();
    }
    print_line(j.dump());
    if (a.fail_on_loss && (report.lost > 0 || report.order_violations > 0)) {
        return fail(kExitRuntime, "Loss", std::to_string(report.lost) + " deliveries lost");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    start_signal_thread();

    CLI::App app{"rescue: content-based publish/subscribe for crisis sensing"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "rescue 0.1.0");

    BrokerArgs ba;
    auto* broker_cmd = app.add_subcommand("broker", "Run the broker until interrupted");
    broker_cmd->add_option("--host", ba.host, "Listen address")->capture_default_str();
    broker_cmd->add_option("--port", ba.port, "Listen port (0 picks a free port)")->capture_default_str();
    broker_cmd->add_option("--queue-cap", ba.queue_cap, "Per-session outbound queue cap")->capture_default_str();
    broker_cmd->add_option("--max-subscriptions", ba.max_subscriptions, "Subscriptions per session")
        ->capture_default_str();
    broker_cmd->add_option("--stale-after-ms", ba.stale_after_ms, "Silence before STALE")->capture_default_str();
    broker_cmd->add_option("--gone-after-ms", ba.gone_after_ms, "Silence before GONE")->capture_default_str();
    broker_cmd->add_option("--stats-port", ba.stats_port, "Serve GET /stats on this port (0 picks one)");
    broker_cmd->add_flag("--quiet", ba.quiet, "No JSON logs on stderr");

    PublishArgs pa;
    auto* publish_cmd = app.add_subcommand("publish", "Publish one event or replay a recorded log");
    publish_cmd->add_option("--broker", pa.broker, "Broker host:port")->capture_default_str();
    publish_cmd->add_option("--client-id", pa.client_id, "Installation code (generated when omitted)");
    publish_cmd->add_option("--kind", pa.kind, "Sensor kind");
    publish_cmd->add_option("--value", pa.value, "Reading; x,y,z for ACCELEROMETER");
    publish_cmd->add_option("--lat", pa.lat, "Latitude");
    publish_cmd->add_option("--lon", pa.lon, "Longitude");
    publish_cmd->add_option("--accuracy", pa.accuracy, "Position accuracy in metres")->capture_default_str();
    publish_cmd->add_option("--timestamp-ms", pa.timestamp_ms, "Event time (default: now)");
    publish_cmd->add_option("--activity", pa.activity, "STATE[:CONFIDENCE]");
    publish_cmd->add_option("--from-file", pa.from_file, "Replay a file of canonical event lines");
    publish_cmd->add_option("--speed", pa.speed, "Replay speed-up; 0 sends without pacing")->capture_default_str();

    SubscribeArgs sa;
    auto* subscribe_cmd = app.add_subcommand("subscribe", "Print matching deliveries, one line each");
    subscribe_cmd->add_option("--broker", sa.broker, "Broker host:port")->capture_default_str();
    subscribe_cmd->add_option("--client-id", sa.client_id, "Installation code (generated when omitted)");
    subscribe_cmd->add_option("--filter", sa.filter, "Predicate; empty matches everything");
    subscribe_cmd->add_option("--count", sa.count, "Exit after this many events");
    subscribe_cmd->add_option("--duration-s", sa.duration_s, "Exit after this many seconds");
    subscribe_cmd->add_flag("--presence", sa.presence, "Also print PRESENCE transitions");

    SimulateArgs sia;
    auto* simulate_cmd = app.add_subcommand("simulate", "Run a scenario against a broker");
    simulate_cmd->add_option("--scenario", sia.scenario, "Scenario JSON file")->required();
    simulate_cmd->add_option("--broker", sia.broker, "Broker host:port")->capture_default_str();
    simulate_cmd->add_option("--seed", sia.seed, "Override the scenario seed");
    simulate_cmd->add_flag("--virtual-clock", sia.virtual_clock, "Fixed epoch, no sleeping");
    simulate_cmd->add_option("--speed", sia.speed, "Wall-clock speed-up")->capture_default_str();

    AggregateArgs aa;
    auto* aggregate_cmd = app.add_subcommand("aggregate", "Archive events and serve the HTTP API");
    aggregate_cmd->add_option("--broker", aa.broker, "Broker host:port")->capture_default_str();
    aggregate_cmd->add_option("--store", aa.store, "Event log file (in-memory when omitted)");
    aggregate_cmd->add_option("--http-host", aa.http_host, "HTTP listen address")->capture_default_str();
    aggregate_cmd->add_option("--http-port", aa.http_port, "HTTP port (0 picks one)")->capture_default_str();
    aggregate_cmd->add_option("--ui-dir", aa.ui_dir, "Built dashboard served under /ui/");
    aggregate_cmd->add_option("--store-cap", aa.store_cap, "Events kept before oldest-first eviction")
        ->capture_default_str();
    aggregate_cmd->add_option("--client-id", aa.client_id, "Subscriber identity")->capture_default_str();
    aggregate_cmd->add_flag("--quiet", aa.quiet, "No JSON logs on stderr");

    LoadtestArgs la;
    auto* loadtest_cmd = app.add_subcommand("loadtest", "Measure fan-out delivery and latency");
    loadtest_cmd->add_option("--broker", la.broker, "Broker host:port (default: embedded broker)");
    loadtest_cmd->add_flag("--embedded", la.embedded, "Start a broker in this process");
    loadtest_cmd->add_option("--queue-cap", la.queue_cap, "Embedded broker queue cap")->capture_default_str();
    loadtest_cmd->add_option("-P,--publishers", la.opts.publishers, "Publishers")->capture_default_str();
    loadtest_cmd->add_option("-S,--subscribers", la.opts.subscribers, "Match-all subscribers")->capture_default_str();
    loadtest_cmd->add_option("--slow-subscribers", la.opts.slow_subscribers, "Subscribers that never read")
        ->capture_default_str();
    loadtest_cmd->add_option("-R,--rate", la.opts.rate_hz, "Events per second per publisher")->capture_default_str();
    loadtest_cmd->add_option("-T,--duration", la.opts.duration_s, "Seconds")->capture_default_str();
    loadtest_cmd->add_option("--filter", la.opts.filter, "Subscriber predicate");
    loadtest_cmd->add_flag("--fail-on-loss", la.fail_on_loss, "Exit 1 on any loss");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(kExitUsage, "Usage", e.what());
    }

    try {
        if (*broker_cmd) {
            return run_broker(ba);
        }
        if (*publish_cmd) {
            return run_publish(pa);
        }
        if (*subscribe_cmd) {
            return run_subscribe(sa);
        }
        if (*simulate_cmd) {
            return run_simulate(sia);
        }
        if (*aggregate_cmd) {
            return run_aggregate(aa);
        }
        if (*loadtest_cmd) {
            return run_loadtest(la);
        }
    } catch (const std::exception& e) {
        return fail(kExitRuntime, "RuntimeError", e.what());
    }
    return kExitUsage;
}
