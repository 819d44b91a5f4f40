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
#include "rescue/store.hpp"

#include <algorithm>
#include <mutex>
#include <system_error>

namespace rescue::agg {

namespace {

template <typename Multimap>
void erase_entry(Multimap& index, const typename Multimap::key_type& key, std::uint64_t ordinal)
{
    auto [lo, hi] = index.equal_range(key);
    for (auto it = lo; it != hi; ++it) {
        if (it->second == ordinal) {
            index.erase(it);
            return;
        }
    }
}

}  // namespace

EventStore::EventStore(std::optional<std::filesystem::path> path, std::size_t cap, JsonLog* log)
    : path_(std::move(path))
    , cap_(std::max<std::size_t>(cap, 1))
    , log_(log)
{
    if (path_) {
        load();
        file_.open(*path_, std::ios::app | std::ios::binary);
        if (!file_) {
            throw std::system_error(std::make_error_code(std::errc::io_error), "cannot open " + path_->string());
        }
    }
}

void EventStore::load()
{
    std::ifstream in(*path_, std::ios::binary);
    if (!in) {
        return;
    }
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        ++lines;
        SensorEvent e;
        try {
            e = canonical_decode(line);
        } catch (const std::exception&) {
            ++stats_.corrupt_lines;
            continue;
        }
        insert_locked(e, line);
    }
    in.close();
    // Rewrite the file once it carries evicted or unreadable lines.
    if (lines > log_entries_.size()) {
        const auto tmp = path_->string() + ".compact";
        {
            std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
            for (const auto& s : log_entries_) {
                out << s.raw << '\n';
            }
        }
        std::filesystem::rename(tmp, *path_);
        if (log_) {
            log_->write("store_compacted", {{"kept", log_entries_.size()}, {"lines", lines}});
        }
    }
    stats_.appended = 0;
}

const StoredEvent& EventStore::at(std::uint64_t ordinal) const
{
    return log_entries_[static_cast<std::size_t>(ordinal - log_entries_.front().ordinal)];
}

bool EventStore::insert_locked(const SensorEvent& event, std::string raw)
{
    if (by_id_.contains(event.event_id)) {
        ++stats_.duplicates;
        return false;
    }
    if (log_entries_.size() >= cap_) {
        evict_oldest_locked();
    }
    const std::uint64_t ord = next_ordinal_++;
    const TimeKey key{event.timestamp_ms, event.seq};
    by_id_.emplace(event.event_id, ord);
    by_publisher_[event.publisher_id][event.kind].emplace(key, ord);
    by_kind_[event.kind].emplace(key, ord);
    log_entries_.push_back({ord, std::move(raw), event});
    ++stats_.appended;
    return true;
}

void EventStore::evict_oldest_locked()
{
    const auto& oldest = log_entries_.front();
    const auto& e = oldest.event;
    const TimeKey key{e.timestamp_ms, e.seq};
    by_id_.erase(e.event_id);
    auto pub = by_publisher_.find(e.publisher_id);
    if (pub != by_publisher_.end()) {
        erase_entry(pub->second[e.kind], key, oldest.ordinal);
        if (pub->second[e.kind].empty()) {
            pub->second.erase(e.kind);
        }
        if (pub->second.empty()) {
            by_publisher_.erase(pub);
        }
    }
    erase_entry(by_kind_[e.kind], key, oldest.ordinal);
    log_entries_.pop_front();
    ++stats_.evicted;
    if (log_ && (stats_.evicted == 1 || stats_.evicted % 10'000 == 0)) {
        log_->write("store_full", {{"cap", cap_}, {"evicted", stats_.evicted}});
    }
}

AppendResult EventStore::append(const SensorEvent& event)
{
    return append(event, canonical_encode(event));
}

AppendResult EventStore::append(const SensorEvent& event, std::string raw)
{
    std::unique_lock lock(mutex_);
    if (!insert_locked(event, raw)) {
        return AppendResult::Duplicate;
    }
    if (file_.is_open()) {
        file_ << raw << '\n';
        file_.flush();
    }
    return AppendResult::Stored;
}

std::size_t EventStore::size() const
{
    std::shared_lock lock(mutex_);
    return log_entries_.size();
}

StoreStats EventStore::stats() const
{
    std::shared_lock lock(mutex_);
    StoreStats s = stats_;
    s.stored = log_entries_.size();
    return s;
}

std::vector<std::string> EventStore::publishers() const
{
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    out.reserve(by_publisher_.size());
    for (const auto& [id, _] : by_publisher_) {
        out.push_back(id);
    }
    return out;
}

std::map<SensorKind, StoredEvent> EventStore::latest(const std::string& publisher_id) const
{
    std::shared_lock lock(mutex_);
    std::map<SensorKind, StoredEvent> out;
    auto pub = by_publisher_.find(publisher_id);
    if (pub == by_publisher_.end()) {
        return out;
    }
    for (const auto& [kind, index] : pub->second) {
        if (!index.empty()) {
            out.emplace(kind, at(std::prev(index.end())->second));
        }
    }
    return out;
}

std::vector<StoredEvent> EventStore::range(const std::string& publisher_id, SensorKind kind, std::int64_t from_ms,
                                           std::int64_t to_ms) const
{
    std::shared_lock lock(mutex_);
    std::vector<StoredEvent> out;
    auto pub = by_publisher_.find(publisher_id);
    if (pub == by_publisher_.end()) {
        return out;
    }
    auto idx = pub->second.find(kind);
    if (idx == pub->second.end()) {
        return out;
    }
    const auto& index = idx->second;
    for (auto it = index.lower_bound({from_ms, kMinTime}); it != index.end() && it->first.first <= to_ms; ++it) {
        out.push_back(at(it->second));
    }
    return out;
}

std::vector<StoredEvent> EventStore::range(SensorKind kind, std::int64_t from_ms, std::int64_t to_ms) const
{
    std::shared_lock lock(mutex_);
    std::vector<StoredEvent> out;
    auto idx = by_kind_.find(kind);
    if (idx == by_kind_.end()) {
        return out;
    }
    const auto& index = idx->second;
    for (auto it = index.lower_bound({from_ms, kMinTime}); it != index.end() && it->first.first <= to_ms; ++it) {
        out.push_back(at(it->second));
    }
    return out;
}

std::optional<std::string> EventStore::raw(const std::string& event_id) const
{
    std::shared_lock lock(mutex_);
    auto it = by_id_.find(event_id);
    if (it == by_id_.end()) {
        return std::nullopt;
    }
    return at(it->second).raw;
}

void EventStore::for_each(const std::function<void(const StoredEvent&)>& fn) const
{
    std::shared_lock lock(mutex_);
    for (const auto& s : log_entries_) {
        fn(s);
    }
}

}  // namespace rescue::agg
