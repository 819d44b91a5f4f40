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

// The web subscriber: archives every routed event, answers latest/series/
// heat-map queries and fans ingested items out to live streams.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rescue/client.hpp"
#include "rescue/kernels.hpp"
#include "rescue/log.hpp"
#include "rescue/predicate.hpp"
#include "rescue/protocol.hpp"
#include "rescue/store.hpp"

namespace rescue::agg {

class BadRange : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class BadGrid : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr int kMaxGridSide = 256;

struct Bucket {
    std::int64_t from_ms = 0;
    std::int64_t to_ms = 0;  // inclusive
    std::uint64_t count = 0;
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
};

struct Series {
    std::string publisher_id;
    SensorKind kind = SensorKind::Thermometer;
    std::uint64_t count = 0;
    bool downsampled = false;
    std::vector<StoredEvent> raw;  // when !downsampled
    std::vector<Bucket> buckets;   // when downsampled
};

/// All matching events when they fit in max_points, otherwise equal-width
/// time buckets over the observed range with empty buckets omitted.
Series query_series(const EventStore& store, const std::string& publisher_id, SensorKind kind,
                    std::int64_t from_ms, std::int64_t to_ms, std::size_t max_points);

struct HeatMap {
    SensorKind kind = SensorKind::Thermometer;
    kernels::GridSpec grid;
    std::int64_t from_ms = kMinTime;
    std::int64_t to_ms = kMaxTime;
    std::vector<kernels::CellStats> cells;  // row-major, row 0 at min_lat

    std::uint64_t total() const noexcept;
};

HeatMap heatmap(const EventStore& store, SensorKind kind, const BoundingBox& box, int rows, int cols,
                std::int64_t from_ms = kMinTime, std::int64_t to_ms = kMaxTime);

nlohmann::ordered_json to_json(const Series& series);
nlohmann::ordered_json to_json(const HeatMap& map);

/// Parses "min_lat,min_lon,max_lat,max_lon".
std::optional<BoundingBox> parse_bbox(std::string_view text);

/// Buffered server-push queue for one stream client. Overflow drops the
/// oldest item so ingest never waits on a reader.
class StreamQueue {
public:
    explicit StreamQueue(std::size_t cap) : cap_(cap) {}

    void push(std::string item);
    std::optional<std::string> pop(std::chrono::milliseconds wait);
    void close();
    bool closed() const;
    std::uint64_t dropped() const noexcept { return dropped_.load(); }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::string> items_;
    std::size_t cap_;
    bool closed_ = false;
    std::atomic<std::uint64_t> dropped_{0};
};

struct PresenceView {
    std::string publisher_id;
    proto::PresenceState state = proto::PresenceState::Fresh;
    std::int64_t last_seen_ms = 0;
    std::optional<GeoPosition> position;
};

struct ServiceOptions {
    std::optional<net::Endpoint> broker;
    std::optional<std::filesystem::path> store_path;
    std::size_t store_cap = kDefaultStoreCap;
    std::string client_id = "aggregator";
    std::size_t stream_cap = 1024;
    std::size_t delivery_cap = 1 << 16;
    std::chrono::milliseconds reconnect_interval{1000};
};

class AggregationService {
public:
    explicit AggregationService(ServiceOptions options, JsonLog* log = nullptr);
    ~AggregationService();

    AggregationService(const AggregationService&) = delete;
    AggregationService& operator=(const AggregationService&) = delete;

    /// Connects to the broker (when configured) with a match-all
    /// subscription and starts ingesting. Throws client::ClientError if the
    /// first connection attempt fails.
    void start();
    void stop();

    void ingest(const client::Delivery& delivery);
    void ingest_event(const SensorEvent& event);
    void ingest_presence(const proto::Presence& presence);

    /// SSE-formatted items matching `filter` from now on. Throws
    /// PredicateError on a malformed filter.
    std::shared_ptr<StreamQueue> open_stream(std::string_view filter, bool with_presence = true);
    void close_stream(const std::shared_ptr<StreamQueue>& stream);

    EventStore& store() noexcept { return *store_; }
    const EventStore& store() const noexcept { return *store_; }

    std::vector<PresenceView> presence() const;
    bool broker_connected() const noexcept { return connected_.load(); }
    std::uint64_t ingested() const noexcept { return ingested_.load(); }
    std::uint64_t presence_updates() const noexcept { return presence_updates_.load(); }

    nlohmann::ordered_json publishers_json() const;
    nlohmann::ordered_json latest_json(const std::string& publisher_id) const;
    nlohmann::ordered_json stats_json() const;

private:
    struct Stream {
        std::optional<SubscriptionPredicate> filter;
        bool presence;
        std::shared_ptr<StreamQueue> queue;
    };

    ServiceOptions options_;
    JsonLog* log_;
    std::unique_ptr<EventStore> store_;

    mutable std::mutex presence_mutex_;
    std::map<std::string, PresenceView> presence_;

    mutable std::mutex streams_mutex_;
    std::list<Stream> streams_;
    std::atomic<std::uint64_t> closed_stream_drops_{0};

    std::atomic<std::uint64_t> ingested_{0};
    std::atomic<std::uint64_t> presence_updates_{0};
    std::atomic<bool> connected_{false};
    std::atomic<bool> running_{false};
    std::thread ingest_thread_;
    std::unique_ptr<client::Client> client_;
    mutable std::mutex client_mutex_;

    void connect();
    void ingest_loop();
    void fan_out_event(const SensorEvent& event, const std::string& raw);
    void fan_out_presence(const proto::Presence& presence);
};

}  // namespace rescue::agg
