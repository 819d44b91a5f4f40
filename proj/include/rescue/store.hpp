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

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "rescue/log.hpp"
#include "rescue/model.hpp"

namespace rescue::agg {

inline constexpr std::size_t kDefaultStoreCap = 1'000'000;
inline constexpr std::int64_t kMinTime = std::numeric_limits<std::int64_t>::min();
inline constexpr std::int64_t kMaxTime = std::numeric_limits<std::int64_t>::max();

struct StoredEvent {
    std::uint64_t ordinal = 0;
    std::string raw;  // canonical encoding exactly as received
    SensorEvent event;
};

struct StoreStats {
    std::uint64_t stored = 0;
    std::uint64_t appended = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t evicted = 0;
    std::uint64_t corrupt_lines = 0;
};

enum class AppendResult { Stored, Duplicate };

/// Append-only event log. With a path, every accepted event is appended to
/// the file as one line and the in-memory indexes are rebuilt from it on
/// open. One writer, many readers.
class EventStore {
public:
    explicit EventStore(std::optional<std::filesystem::path> path = std::nullopt,
                        std::size_t cap = kDefaultStoreCap, JsonLog* log = nullptr);

    AppendResult append(const SensorEvent& event);
    /// `raw` must be the event's canonical encoding.
    AppendResult append(const SensorEvent& event, std::string raw);

    std::size_t size() const;
    StoreStats stats() const;
    const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

    std::vector<std::string> publishers() const;
    /// Newest event per kind by (timestamp, seq).
    std::map<SensorKind, StoredEvent> latest(const std::string& publisher_id) const;
    /// Events of one publisher and kind with from <= timestamp <= to, ordered
    /// by (timestamp, seq).
    std::vector<StoredEvent> range(const std::string& publisher_id, SensorKind kind, std::int64_t from_ms,
                                   std::int64_t to_ms) const;
    /// Events of one kind across publishers, ordered by timestamp.
    std::vector<StoredEvent> range(SensorKind kind, std::int64_t from_ms, std::int64_t to_ms) const;
    std::optional<std::string> raw(const std::string& event_id) const;
    /// Every stored event in append order.
    void for_each(const std::function<void(const StoredEvent&)>& fn) const;

private:
    using TimeKey = std::pair<std::int64_t, std::int64_t>;  // (timestamp, seq)

    std::optional<std::filesystem::path> path_;
    std::size_t cap_;
    JsonLog* log_;
    std::ofstream file_;

    mutable std::shared_mutex mutex_;
    std::deque<StoredEvent> log_entries_;
    std::uint64_t next_ordinal_ = 0;
    std::unordered_map<std::string, std::uint64_t> by_id_;
    std::map<std::string, std::map<SensorKind, std::multimap<TimeKey, std::uint64_t>>> by_publisher_;
    std::map<SensorKind, std::multimap<TimeKey, std::uint64_t>> by_kind_;
    StoreStats stats_;

    const StoredEvent& at(std::uint64_t ordinal) const;
    bool insert_locked(const SensorEvent& event, std::string raw);
    void evict_oldest_locked();
    void load();
};

}  // namespace rescue::agg
