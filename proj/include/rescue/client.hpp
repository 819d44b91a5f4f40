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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <variant>

#include "rescue/model.hpp"
#include "rescue/net.hpp"
#include "rescue/protocol.hpp"

namespace rescue::client {

struct ClientConfig {
    net::Endpoint broker{"127.0.0.1", proto::kDefaultPort};
    proto::Role role = proto::Role::Publisher;
    std::string client_id;
    std::chrono::milliseconds heartbeat_interval{5000};
    std::chrono::milliseconds timeout{3000};
    /// Deliveries buffered before newer ones are dropped; mirrors the broker's queue cap.
    std::size_t delivery_cap = 1024;
};

enum class ClientErrc {
    ConnectionRefused,
    HandshakeTimeout,
    VersionMismatch,
    Rejected,
    NotAPublisher,
    NotASubscriber,
    SessionClosed,
    EventInvalid,
    InvalidPredicate,
    TooManySubscriptions,
    Timeout,
};

std::string_view to_string(ClientErrc code) noexcept;

class ClientError : public std::runtime_error {
public:
    ClientError(ClientErrc code, const std::string& detail);
    ClientErrc code() const noexcept { return code_; }

private:
    ClientErrc code_;
};

using Delivery = std::variant<proto::Notify, proto::Presence>;

/// Random installation code of the form "ic-" + 16 hex digits.
std::string generate_client_id();

/// A live session with the broker. Publishing and subscribing may run on
/// two different threads; each side on its own is single-caller.
class Client {
public:
    /// Connects and completes the HELLO exchange. Throws ClientError.
    static std::unique_ptr<Client> connect(const ClientConfig& config);

    ~Client();
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    const std::string& client_id() const noexcept { return config_.client_id; }
    proto::Role role() const noexcept { return config_.role; }

    /// Builds an event stamped with this client's identity and the next
    /// sequence number (1, 2, 3, ...).
    SensorEvent make_event(SensorKind kind, SensorValue value, const GeoPosition& position,
                           std::int64_t timestamp_ms, std::optional<ActivityEstimate> activity = std::nullopt);

    /// Fire-and-forget: returns once the frame is written locally.
    void publish(const SensorEvent& event);

    /// Registers a predicate and waits for the broker's acknowledgment.
    /// Returns the subscription id.
    std::string subscribe(std::string_view filter);
    void unsubscribe(const std::string& subscription_id);

    /// Next NOTIFY or PRESENCE in arrival order; nullopt on timeout, or
    /// when the session is closed and nothing is left.
    std::optional<Delivery> next(std::chrono::milliseconds timeout);

    std::uint64_t dropped_deliveries() const noexcept { return dropped_.load(); }
    std::int64_t last_seq() const noexcept { return last_seq_.load(); }
    bool closed() const noexcept { return closed_.load(); }

    /// Sends BYE and closes the transport.
    void close();
    /// Drops the transport without BYE.
    void abort();

    /// Sends raw bytes as-is; for fault-injection tests.
    void send_raw(std::string_view bytes);

private:
    explicit Client(ClientConfig config);

    ClientConfig config_;
    net::Socket socket_;
    std::unique_ptr<net::LineReader> reader_;
    std::string nonce_;

    std::mutex write_mutex_;
    std::atomic<bool> closed_{false};
    std::atomic<bool> stopping_{false};

    std::atomic<std::int64_t> next_seq_{1};
    std::atomic<std::int64_t> last_seq_{0};

    std::mutex delivery_mutex_;
    std::condition_variable delivery_cv_;
    std::deque<Delivery> deliveries_;
    std::atomic<std::uint64_t> dropped_{0};

    std::mutex reply_mutex_;
    std::condition_variable reply_cv_;
    std::deque<std::variant<proto::SubscribeAck, proto::Error>> replies_;
    std::mutex subscribe_mutex_;

    std::thread reader_thread_;
    std::thread heartbeat_thread_;
    std::mutex heartbeat_mutex_;
    std::condition_variable heartbeat_cv_;

    void send_line(const std::string& line);
    void read_loop();
    void heartbeat_loop();
    void mark_closed();
    void join_threads();
};

}  // namespace rescue::client
