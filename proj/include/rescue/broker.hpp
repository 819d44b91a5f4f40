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
#pragma once

// The routing core. Broker holds sessions, the subscription registry and
// the presence table and is transport-independent; BrokerServer drives it
// over TCP with one reader and one writer thread per session.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "rescue/clock.hpp"
#include "rescue/log.hpp"
#include "rescue/net.hpp"
#include "rescue/predicate.hpp"
#include "rescue/protocol.hpp"

namespace rescue::broker {

struct BrokerOptions {
    std::size_t queue_cap = 1024;
    std::size_t max_subscriptions = 64;
    std::int64_t stale_after_ms = 15'000;
    std::int64_t gone_after_ms = 60'000;
};

/// Bounded FIFO of encoded frames headed to one session. Data frames are
/// dropped (newest first) once the cap is reached; control frames are not.
class Outbox {
public:
    explicit Outbox(std::size_t cap) : cap_(cap) {}

    /// False when the frame was dropped or the outbox is closed.
    bool offer(std::string line);
    void force(std::string line);
    /// Blocks up to `wait`; nullopt on timeout or once closed and drained.
    std::optional<std::string> pop(std::chrono::milliseconds wait);
    std::vector<std::string> drain();
    void close();
    bool closed() const;
    bool closed_and_empty() const;
    std::size_t size() const;
    std::uint64_t dropped() const noexcept { return dropped_.load(); }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::string> queue_;
    std::size_t cap_;
    bool closed_ = false;
    std::atomic<std::uint64_t> dropped_{0};
};

struct Session {
    Session(std::uint64_t id, std::string client_id, proto::Role role, std::int64_t connected_at_ms,
            std::size_t queue_cap)
        : id(id)
        , client_id(std::move(client_id))
        , role(role)
        , connected_at_ms(connected_at_ms)
        , outbox(queue_cap)
    {
    }

    const std::uint64_t id;
    const std::string client_id;
    const proto::Role role;
    const std::int64_t connected_at_ms;
    Outbox outbox;
    std::atomic<std::uint64_t> next_subscription{1};
    std::atomic<bool> open{true};
};

using SessionPtr = std::shared_ptr<Session>;

class BrokerError : public std::runtime_error {
public:
    BrokerError(std::string code, const std::string& message)
        : std::runtime_error(message)
        , code_(std::move(code))
    {
    }
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct DeliveryOutcome {
    std::uint64_t session = 0;
    bool delivered = false;  // false: dropped as a slow consumer
};

struct DeliveryReport {
    std::string event_id;
    std::size_t delivered = 0;
    std::size_t dropped = 0;
    std::vector<DeliveryOutcome> outcomes;
};

struct PresenceRecord {
    std::int64_t last_seen_ms = 0;
    std::optional<GeoPosition> last_position;
    bool stale = false;
};

struct BrokerStats {
    std::uint64_t events_routed = 0;
    std::uint64_t deliveries = 0;
    std::uint64_t drops = 0;
    std::uint64_t active_sessions = 0;
};

enum class Direction { In, Out };

/// Optional observer of every frame line crossing a session boundary.
using TranscriptFn = std::function<void(const Session&, Direction, std::string_view line)>;

class Broker {
public:
    Broker(BrokerOptions options, std::shared_ptr<const Clock> clock, JsonLog* log = nullptr);

    /// Validates a HELLO and registers the session. Throws BrokerError
    /// (VersionMismatch, BadClientId). The HELLO_ACK is queued on the outbox.
    SessionPtr open_session(const proto::Hello& hello);

    /// Dispatches one decoded frame from an established session. Returns
    /// false when the session should close (BYE).
    bool handle(Session& session, const proto::Frame& frame);

    DeliveryReport route(const SensorEvent& event, const Session& from);
    proto::SubscribeAck subscribe(Session& session, std::string_view filter);
    bool unsubscribe(Session& session, std::string_view subscription_id);
    void heartbeat(Session& session);

    /// Applies the staleness rules at `now_ms` and broadcasts every transition.
    std::vector<proto::Presence> heartbeat_scan(std::int64_t now_ms);

    /// Removes the session and its subscriptions. An explicit BYE from a
    /// publisher broadcasts GONE at once; a dropped connection is left to
    /// the staleness rules.
    void disconnect(Session& session, bool explicit_bye);

    /// Queues an ERROR frame on the session regardless of the queue cap.
    void reply_error(Session& session, std::string code, std::string message, std::string_view in_reply_to);

    /// GONE for every tracked publisher, then closes every outbox.
    void shutdown_all();

    BrokerStats stats() const;
    std::map<std::string, PresenceRecord> presence() const;
    std::vector<SessionPtr> sessions() const;
    const SubscriptionRegistry& registry() const noexcept { return registry_; }
    const BrokerOptions& options() const noexcept { return options_; }
    std::int64_t now_ms() const { return clock_->now_ms(); }

    void set_transcript(TranscriptFn fn) { transcript_ = std::move(fn); }
    const TranscriptFn& transcript() const noexcept { return transcript_; }

private:
    BrokerOptions options_;
    std::shared_ptr<const Clock> clock_;
    JsonLog* log_;
    TranscriptFn transcript_;

    SubscriptionRegistry registry_;

    mutable std::shared_mutex sessions_mutex_;
    std::unordered_map<std::uint64_t, SessionPtr> sessions_;
    std::atomic<std::uint64_t> next_session_{1};

    mutable std::mutex presence_mutex_;
    std::map<std::string, PresenceRecord> presence_;

    std::atomic<std::uint64_t> events_routed_{0};
    std::atomic<std::uint64_t> deliveries_{0};
    std::atomic<std::uint64_t> drops_{0};

    void touch_publisher(const std::string& publisher_id, const std::optional<GeoPosition>& position);
    void broadcast_presence(const proto::Presence& p);
    bool has_other_live_session(const std::string& client_id, std::uint64_t except) const;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = proto::kDefaultPort;  // 0 picks a free port
    BrokerOptions broker;
    std::chrono::milliseconds scan_interval{1000};
    std::chrono::milliseconds handshake_timeout{3000};
};

class BrokerServer {
public:
    BrokerServer(ServerOptions options, std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>(),
                 JsonLog* log = nullptr);
    ~BrokerServer();

    BrokerServer(const BrokerServer&) = delete;
    BrokerServer& operator=(const BrokerServer&) = delete;

    /// Binds and starts serving. Throws std::system_error if the port is taken.
    void start();
    /// Broadcasts GONE for all publishers, closes every session, joins threads.
    void stop();

    std::uint16_t port() const noexcept { return port_; }
    net::Endpoint endpoint() const { return {options_.host == "0.0.0.0" ? "127.0.0.1" : options_.host, port_}; }
    Broker& core() noexcept { return broker_; }

private:
    struct Connection {
        net::Socket socket;
        SessionPtr session;
        std::thread reader;
        std::thread writer;
        std::atomic<bool> done{false};
    };

    ServerOptions options_;
    JsonLog* log_;
    Broker broker_;
    net::Socket listener_;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::thread scan_thread_;
    std::mutex scan_mutex_;
    std::condition_variable scan_cv_;

    std::mutex conns_mutex_;
    std::list<std::unique_ptr<Connection>> conns_;

    void accept_loop();
    void scan_loop();
    void serve(Connection& conn);
    void write_loop(Connection& conn);
    void reap(bool all);
};

}  // namespace rescue::broker
