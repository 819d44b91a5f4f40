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
#include "rescue/loadtest.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <thread>

#include "rescue/client.hpp"
#include "rescue/clock.hpp"
#include "rescue/protocol.hpp"

namespace rescue::loadtest {

namespace {

using Steady = std::chrono::steady_clock;

std::int64_t steady_ns()
{
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Steady::now().time_since_epoch()).count();
}

/// A subscriber that completes the handshake and subscription on a raw
/// socket and then leaves it unread until the run ends.
struct SlowSubscriber {
    net::Socket socket;

    explicit SlowSubscriber(const Options& o, int index)
    {
        socket = net::connect_tcp(o.broker, 3000);
        net::set_receive_buffer(socket.fd(), 4096);
        net::write_all(socket.fd(), proto::encode_frame(proto::Hello{std::string(proto::kVersion),
                                                                     proto::Role::Subscriber,
                                                                     "lt-slow-" + std::to_string(index)}));
        net::write_all(socket.fd(), proto::encode_frame(proto::Subscribe{o.filter}));
    }

    std::uint64_t drain(int timeout_ms)
    {
        net::LineReader reader(socket.fd(), proto::kMaxFrameBytes);
        std::string line;
        std::uint64_t n = 0;
        while (reader.read_line(line, timeout_ms) == net::LineReader::Status::Line) {
            if (line.find("\"type\":\"NOTIFY\"") != std::string::npos) {
                ++n;
            }
        }
        return n;
    }
};

}  // namespace

double Report::delivery_rate() const noexcept
{
    return expected == 0 ? 1.0 : static_cast<double>(received) / static_cast<double>(expected);
}

nlohmann::ordered_json Report::to_json() const
{
    nlohmann::ordered_json j;
    j["published"] = published;
    j["expected"] = expected;
    j["received"] = received;
    j["lost"] = lost;
    j["delivery_rate"] = delivery_rate();
    j["order_violations"] = order_violations;
    j["client_drops"] = client_drops;
    j["slow_expected"] = slow_expected;
    j["slow_received"] = slow_received;
    j["latency_ms"] = {{"p50", p50_ms}, {"p95", p95_ms}, {"p99", p99_ms}, {"max", max_ms}};
    j["elapsed_s"] = elapsed_s;
    j["errors"] = errors;
    return j;
}

double percentile(std::vector<double> values, double p)
{
    if (values.empty()) {
        return 0.0;
    }
    std::sort(values.begin(), values.end());
    const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
    const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
    return values[idx];
}

Report run(const Options& o)
{
    const auto started = Steady::now();
    const int P = std::max(o.publishers, 0);
    const int S = std::max(o.subscribers, 0);
    const auto per_pub = static_cast<std::size_t>(std::llround(o.rate_hz * o.duration_s));

    // send_ns[p][seq - 1]: steady-clock send time.
    std::vector<std::unique_ptr<std::atomic<std::int64_t>[]>> send_ns;
    for (int p = 0; p < P; ++p) {
        send_ns.emplace_back(new std::atomic<std::int64_t>[per_pub]());
    }

    Report report;
    std::mutex report_mutex;

    std::vector<std::unique_ptr<client::Client>> subs;
    for (int s = 0; s < S; ++s) {
        client::ClientConfig cfg;
        cfg.broker = o.broker;
        cfg.role = proto::Role::Subscriber;
        cfg.client_id = "lt-sub-" + std::to_string(s);
        cfg.delivery_cap = std::max<std::size_t>(per_pub * static_cast<std::size_t>(P) + 16, 1024);
        subs.push_back(client::Client::connect(cfg));
        subs.back()->subscribe(o.filter);
    }
    std::vector<std::unique_ptr<SlowSubscriber>> slow;
    for (int s = 0; s < o.slow_subscribers; ++s) {
        slow.push_back(std::make_unique<SlowSubscriber>(o, s));
    }

    std::vector<std::unique_ptr<client::Client>> pubs;
    std::vector<std::string> pub_ids;
    for (int p = 0; p < P; ++p) {
        client::ClientConfig cfg;
        cfg.broker = o.broker;
        cfg.role = proto::Role::Publisher;
        cfg.client_id = "lt-pub-" + std::to_string(p);
        pubs.push_back(client::Client::connect(cfg));
        pub_ids.push_back(cfg.client_id);
    }

    std::atomic<std::uint64_t> published{0};
    std::atomic<bool> sending_done{false};
    const auto t0 = Steady::now();
    const auto period = std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / std::max(o.rate_hz, 1e-9)));

    std::vector<std::thread> threads;
    for (int p = 0; p < P; ++p) {
        threads.emplace_back([&, p] {
            auto& c = *pubs[p];
            try {
                for (std::size_t i = 0; i < per_pub; ++i) {
                    std::this_thread::sleep_until(t0 + period * static_cast<std::int64_t>(i));
                    auto e = c.make_event(SensorKind::Thermometer, static_cast<double>(i),
                                          GeoPosition{0.0, 0.0, 5.0}, wall_now_ms());
                    send_ns[p][static_cast<std::size_t>(e.seq - 1)].store(steady_ns());
                    c.publish(e);
                    published.fetch_add(1);
                }
            } catch (const std::exception& e) {
                std::lock_guard lock(report_mutex);
                report.errors.push_back(pub_ids[p] + ": " + e.what());
            }
        });
    }

    std::vector<std::vector<double>> latencies(S);
    std::vector<std::uint64_t> received(S, 0);
    std::vector<std::uint64_t> violations(S, 0);
    const std::uint64_t target = per_pub * static_cast<std::uint64_t>(P);
    for (int s = 0; s < S; ++s) {
        threads.emplace_back([&, s] {
            auto& c = *subs[s];
            std::vector<std::int64_t> last_seq(P, 0);
            std::optional<Steady::time_point> deadline;
            while (received[s] < target) {
                if (sending_done.load() && !deadline) {
                    deadline = Steady::now() + std::chrono::milliseconds(static_cast<int>(o.drain_s * 1000));
                }
                if (deadline && Steady::now() >= *deadline) {
                    break;
                }
                auto d = c.next(std::chrono::milliseconds(100));
                if (!d) {
                    if (c.closed()) {
                        break;
                    }
                    continue;
                }
                const auto* n = std::get_if<proto::Notify>(&*d);
                if (!n) {
                    continue;
                }
                const auto now = steady_ns();
                const auto& e = n->event;
                const auto it = std::find(pub_ids.begin(), pub_ids.end(), e.publisher_id);
                if (it == pub_ids.end() || e.seq < 1 || static_cast<std::size_t>(e.seq) > per_pub) {
                    continue;
                }
                const auto p = static_cast<std::size_t>(it - pub_ids.begin());
                if (e.seq <= last_seq[p]) {
                    ++violations[s];
                }
                last_seq[p] = e.seq;
                ++received[s];
                const auto sent = send_ns[p][static_cast<std::size_t>(e.seq - 1)].load();
                if (sent > 0) {
                    latencies[s].push_back(static_cast<double>(now - sent) / 1e6);
                }
            }
        });
    }

    for (int p = 0; p < P; ++p) {
        threads[static_cast<std::size_t>(p)].join();
    }
    sending_done.store(true);
    for (std::size_t i = static_cast<std::size_t>(P); i < threads.size(); ++i) {
        threads[i].join();
    }

    report.published = published.load();
    report.expected = report.published * static_cast<std::uint64_t>(S);
    std::vector<double> all;
    for (int s = 0; s < S; ++s) {
        report.received += received[s];
        report.order_violations += violations[s];
        report.client_drops += subs[s]->dropped_deliveries();
        all.insert(all.end(), latencies[s].begin(), latencies[s].end());
    }
    report.lost = report.expected > report.received ? report.expected - report.received : 0;
    report.p50_ms = percentile(all, 50);
    report.p95_ms = percentile(all, 95);
    report.p99_ms = percentile(all, 99);
    report.max_ms = all.empty() ? 0.0 : *std::max_element(all.begin(), all.end());

    for (auto& p : pubs) {
        p->close();
    }
    report.slow_expected = report.published * slow.size();
    for (auto& s : slow) {
        report.slow_received += s->drain(500);
    }
    for (auto& s : subs) {
        s->close();
    }
    report.elapsed_s = std::chrono::duration<double>(Steady::now() - started).count();
    return report;
}

}  // namespace rescue::loadtest
