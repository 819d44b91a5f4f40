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
#include "rescue/aggregate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "rescue/edge.hpp"

namespace rescue::agg {

using nlohmann::ordered_json;

__extension__ typedef unsigned __int128 u128;

Series query_series(const EventStore& store, const std::string& publisher_id, SensorKind kind,
                    std::int64_t from_ms, std::int64_t to_ms, std::size_t max_points)
{
    if (from_ms > to_ms) {
        throw BadRange("from must not exceed to");
    }
    if (max_points < 2) {
        throw BadRange("max_points must be at least 2");
    }
    Series s;
    s.publisher_id = publisher_id;
    s.kind = kind;
    auto events = store.range(publisher_id, kind, from_ms, to_ms);
    s.count = events.size();
    if (events.size() <= max_points) {
        s.raw = std::move(events);
        return s;
    }
    s.downsampled = true;
    const std::int64_t lo = events.front().event.timestamp_ms;
    const std::int64_t hi = events.back().event.timestamp_ms;
    // span >= 1 so every timestamp in [lo, hi] maps below max_points.
    const auto span = static_cast<u128>(hi - lo) + 1;
    const auto n = static_cast<u128>(max_points);
    std::vector<Bucket> all(max_points);
    std::vector<double> sums(max_points, 0.0);
    // Bucket b holds offsets with floor(off * n / span) == b.
    const auto edge = [&](std::size_t b) { return lo + static_cast<std::int64_t>((span * b + n - 1) / n); };
    for (std::size_t b = 0; b < max_points; ++b) {
        all[b].from_ms = edge(b);
        all[b].to_ms = edge(b + 1) - 1;
    }
    for (const auto& se : events) {
        const auto off = static_cast<u128>(se.event.timestamp_ms - lo);
        const auto b = static_cast<std::size_t>(off * n / span);
        const double v = se.event.scalar();
        auto& bk = all[b];
        if (bk.count == 0) {
            bk.min = bk.max = v;
        } else {
            bk.min = std::min(bk.min, v);
            bk.max = std::max(bk.max, v);
        }
        ++bk.count;
        sums[b] += v;
    }
    for (std::size_t b = 0; b < max_points; ++b) {
        if (all[b].count > 0) {
            all[b].mean = std::clamp(sums[b] / static_cast<double>(all[b].count), all[b].min, all[b].max);
            s.buckets.push_back(all[b]);
        }
    }
    return s;
}

std::uint64_t HeatMap::total() const noexcept
{
    std::uint64_t n = 0;
    for (const auto& c : cells) {
        n += c.count;
    }
    return n;
}

HeatMap heatmap(const EventStore& store, SensorKind kind, const BoundingBox& box, int rows, int cols,
                std::int64_t from_ms, std::int64_t to_ms)
{
    if (from_ms > to_ms) {
        throw BadRange("from must not exceed to");
    }
    if (rows < 1 || cols < 1 || rows > kMaxGridSide || cols > kMaxGridSide) {
        throw BadGrid("rows and cols must be within [1, 256]");
    }
    if (!box.valid() || !(box.min_lat < box.max_lat) || !(box.min_lon < box.max_lon)) {
        throw BadRange("bbox must satisfy min < max on both axes");
    }
    HeatMap map;
    map.kind = kind;
    map.grid = {box, rows, cols};
    map.from_ms = from_ms;
    map.to_ms = to_ms;
    const auto events = store.range(kind, from_ms, to_ms);
    std::vector<kernels::GeoSample> samples;
    samples.reserve(events.size());
    for (const auto& se : events) {
        samples.push_back({se.event.position.lat, se.event.position.lon, se.event.scalar()});
    }
    map.cells = kernels::bin_samples(map.grid, samples);
    return map;
}

ordered_json to_json(const Series& s)
{
    ordered_json out;
    out["publisher_id"] = s.publisher_id;
    out["kind"] = to_string(s.kind);
    out["count"] = s.count;
    out["downsampled"] = s.downsampled;
    if (!s.downsampled) {
        auto points = ordered_json::array();
        for (const auto& se : s.raw) {
            points.push_back({{"t_ms", se.event.timestamp_ms},
                              {"seq", se.event.seq},
                              {"value", se.event.scalar()},
                              {"event_id", se.event.event_id}});
        }
        out["points"] = std::move(points);
    } else {
        auto buckets = ordered_json::array();
        for (const auto& b : s.buckets) {
            buckets.push_back({{"from_ms", b.from_ms},
                               {"to_ms", b.to_ms},
                               {"count", b.count},
                               {"min", b.min},
                               {"mean", b.mean},
                               {"max", b.max}});
        }
        out["buckets"] = std::move(buckets);
    }
    return out;
}

ordered_json to_json(const HeatMap& m)
{
    ordered_json out;
    out["kind"] = to_string(m.kind);
    const auto& b = m.grid.box;
    out["bbox"] = {{"min_lat", b.min_lat}, {"min_lon", b.min_lon}, {"max_lat", b.max_lat}, {"max_lon", b.max_lon}};
    out["rows"] = m.grid.rows;
    out["cols"] = m.grid.cols;
    out["from"] = m.from_ms == kMinTime ? ordered_json() : ordered_json(m.from_ms);
    out["to"] = m.to_ms == kMaxTime ? ordered_json() : ordered_json(m.to_ms);
    out["total"] = m.total();
    auto count = ordered_json::array();
    auto mean = ordered_json::array();
    auto max = ordered_json::array();
    const auto cols = static_cast<std::size_t>(m.grid.cols);
    for (std::size_t r = 0; r < static_cast<std::size_t>(m.grid.rows); ++r) {
        auto count_row = ordered_json::array();
        auto mean_row = ordered_json::array();
        auto max_row = ordered_json::array();
        for (std::size_t c = 0; c < cols; ++c) {
            const auto& cell = m.cells[r * cols + c];
            count_row.push_back(cell.count);
            mean_row.push_back(cell.count ? ordered_json(cell.mean()) : ordered_json());
            max_row.push_back(cell.count ? ordered_json(cell.max) : ordered_json());
        }
        count.push_back(std::move(count_row));
        mean.push_back(std::move(mean_row));
        max.push_back(std::move(max_row));
    }
    out["count"] = std::move(count);
    out["mean"] = std::move(mean);
    out["max"] = std::move(max);
    return out;
}

std::optional<BoundingBox> parse_bbox(std::string_view text)
{
    double v[4];
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        const auto end = i < 3 ? text.find(',', pos) : text.size();
        if (end == std::string_view::npos) {
            return std::nullopt;
        }
        auto part = text.substr(pos, end - pos);
        while (!part.empty() && part.front() == ' ') {
            part.remove_prefix(1);
        }
        while (!part.empty() && part.back() == ' ') {
            part.remove_suffix(1);
        }
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v[i]);
        if (ec != std::errc() || p != part.data() + part.size() || !std::isfinite(v[i])) {
            return std::nullopt;
        }
        pos = end + 1;
    }
    return BoundingBox{v[0], v[1], v[2], v[3]};
}

void StreamQueue::push(std::string item)
{
    {
        std::lock_guard lock(mutex_);
        if (closed_) {
            return;
        }
        if (items_.size() >= cap_) {
            items_.pop_front();
            dropped_.fetch_add(1);
        }
        items_.push_back(std::move(item));
    }
    cv_.notify_one();
}

std::optional<std::string> StreamQueue::pop(std::chrono::milliseconds wait)
{
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, wait, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) {
        return std::nullopt;
    }
    auto item = std::move(items_.front());
    items_.pop_front();
    return item;
}

void StreamQueue::close()
{
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool StreamQueue::closed() const
{
    std::lock_guard lock(mutex_);
    return closed_;
}

AggregationService::AggregationService(ServiceOptions options, JsonLog* log)
    : options_(std::move(options))
    , log_(log)
    , store_(std::make_unique<EventStore>(options_.store_path, options_.store_cap, log))
{
    // Rebuild the presence view from the archive so restarts answer the same.
    store_->for_each([&](const StoredEvent& se) {
        auto& p = presence_[se.event.publisher_id];
        p.publisher_id = se.event.publisher_id;
        if (se.event.timestamp_ms >= p.last_seen_ms) {
            p.last_seen_ms = se.event.timestamp_ms;
            p.position = se.event.position;
        }
    });
}

AggregationService::~AggregationService()
{
    stop();
}

void AggregationService::connect()
{
    client::ClientConfig cfg;
    cfg.broker = *options_.broker;
    cfg.role = proto::Role::Subscriber;
    cfg.client_id = options_.client_id;
    cfg.delivery_cap = options_.delivery_cap;
    auto c = client::Client::connect(cfg);
    c->subscribe("");
    std::lock_guard lock(client_mutex_);
    client_ = std::move(c);
    connected_.store(true);
    if (log_) {
        log_->write("aggregator_connected", {{"broker", options_.broker->to_string()}});
    }
}

void AggregationService::start()
{
    if (running_.exchange(true)) {
        return;
    }
    if (!options_.broker) {
        return;
    }
    connect();
    ingest_thread_ = std::thread([this] { ingest_loop(); });
}

void AggregationService::stop()
{
    if (!running_.exchange(false)) {
        return;
    }
    {
        std::lock_guard lock(client_mutex_);
        if (client_) {
            client_->close();
        }
    }
    if (ingest_thread_.joinable()) {
        ingest_thread_.join();
    }
    std::lock_guard lock(streams_mutex_);
    for (auto& s : streams_) {
        s.queue->close();
    }
}

void AggregationService::ingest_loop()
{
    while (running_.load()) {
        client::Client* c = nullptr;
        {
            std::lock_guard lock(client_mutex_);
            c = client_.get();
        }
        if (c && !c->closed()) {
            if (auto d = c->next(std::chrono::milliseconds(200))) {
                ingest(*d);
            }
            continue;
        }
        // Drain anything left, then reconnect.
        if (c) {
            while (auto d = c->next(std::chrono::milliseconds(0))) {
                ingest(*d);
            }
        }
        connected_.store(false);
        const auto until = std::chrono::steady_clock::now() + options_.reconnect_interval;
        while (running_.load() && std::chrono::steady_clock::now() < until) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        if (!running_.load()) {
            break;
        }
        try {
            connect();
        } catch (const client::ClientError& e) {
            if (log_) {
                log_->write("aggregator_reconnect_failed", {{"error", e.what()}});
            }
        }
    }
}

void AggregationService::ingest(const client::Delivery& delivery)
{
    if (const auto* n = std::get_if<proto::Notify>(&delivery)) {
        ingest_event(n->event);
    } else {
        ingest_presence(std::get<proto::Presence>(delivery));
    }
}

void AggregationService::ingest_event(const SensorEvent& event)
{
    ingested_.fetch_add(1);
    auto raw = canonical_encode(event);
    if (store_->append(event, raw) == AppendResult::Duplicate) {
        return;
    }
    {
        std::lock_guard lock(presence_mutex_);
        auto& p = presence_[event.publisher_id];
        p.publisher_id = event.publisher_id;
        if (event.timestamp_ms >= p.last_seen_ms) {
            p.last_seen_ms = event.timestamp_ms;
            p.position = event.position;
        }
    }
    fan_out_event(event, raw);
}

void AggregationService::ingest_presence(const proto::Presence& presence)
{
    presence_updates_.fetch_add(1);
    {
        std::lock_guard lock(presence_mutex_);
        auto& p = presence_[presence.publisher_id];
        p.publisher_id = presence.publisher_id;
        p.state = presence.state;
        p.last_seen_ms = std::max(p.last_seen_ms, presence.last_seen_ms);
        if (presence.position) {
            p.position = presence.position;
        }
    }
    fan_out_presence(presence);
}

void AggregationService::fan_out_event(const SensorEvent& event, const std::string& raw)
{
    std::string item;
    std::lock_guard lock(streams_mutex_);
    for (auto& s : streams_) {
        if (s.filter && !matches(*s.filter, event)) {
            continue;
        }
        if (item.empty()) {
            item = "event: sensor\ndata: " + raw + "\n\n";
        }
        s.queue->push(item);
    }
}

void AggregationService::fan_out_presence(const proto::Presence& presence)
{
    std::string item;
    std::lock_guard lock(streams_mutex_);
    for (auto& s : streams_) {
        if (!s.presence) {
            continue;
        }
        if (item.empty()) {
            item = "event: presence\ndata: " + proto::encode_presence_body(presence) + "\n\n";
        }
        s.queue->push(item);
    }
}

std::shared_ptr<StreamQueue> AggregationService::open_stream(std::string_view filter, bool with_presence)
{
    std::optional<SubscriptionPredicate> pred;
    auto pred_text = parse_predicate(filter);
    if (!pred_text.constraints.empty()) {
        pred = std::move(pred_text);
    }
    auto q = std::make_shared<StreamQueue>(options_.stream_cap);
    std::lock_guard lock(streams_mutex_);
    streams_.push_back({std::move(pred), with_presence, q});
    return q;
}

void AggregationService::close_stream(const std::shared_ptr<StreamQueue>& stream)
{
    stream->close();
    std::lock_guard lock(streams_mutex_);
    for (auto it = streams_.begin(); it != streams_.end(); ++it) {
        if (it->queue == stream) {
            closed_stream_drops_.fetch_add(stream->dropped());
            streams_.erase(it);
            return;
        }
    }
}

std::vector<PresenceView> AggregationService::presence() const
{
    std::lock_guard lock(presence_mutex_);
    std::vector<PresenceView> out;
    out.reserve(presence_.size());
    for (const auto& [_, p] : presence_) {
        out.push_back(p);
    }
    return out;
}

namespace {

ordered_json presence_json(const PresenceView& p)
{
    ordered_json j;
    j["publisher_id"] = p.publisher_id;
    j["state"] = proto::to_string(p.state);
    j["last_seen_ms"] = p.last_seen_ms;
    j["position"] = p.position ? to_json(*p.position) : ordered_json();
    return j;
}

ordered_json activity_json(const ActivityEstimate& a)
{
    return {{"state", to_string(a.state)}, {"confidence", a.confidence}, {"text", edge::describe_activity(a)}};
}

}  // namespace

ordered_json AggregationService::publishers_json() const
{
    auto list = ordered_json::array();
    for (const auto& p : presence()) {
        auto j = presence_json(p);
        const auto latest = store_->latest(p.publisher_id);
        std::optional<StoredEvent> newest_activity;
        for (const auto& [_, se] : latest) {
            if (se.event.activity && !se.event.alert &&
                (!newest_activity || std::pair{se.event.timestamp_ms, se.event.seq} >
                                         std::pair{newest_activity->event.timestamp_ms, newest_activity->event.seq})) {
                newest_activity = se;
            }
        }
        j["activity"] = newest_activity ? activity_json(*newest_activity->event.activity) : ordered_json();
        list.push_back(std::move(j));
    }
    return list;
}

ordered_json AggregationService::latest_json(const std::string& publisher_id) const
{
    ordered_json out;
    out["publisher_id"] = publisher_id;
    const auto latest = store_->latest(publisher_id);
    std::optional<PresenceView> pv;
    {
        std::lock_guard lock(presence_mutex_);
        if (auto it = presence_.find(publisher_id); it != presence_.end()) {
            pv = it->second;
        }
    }
    out["presence"] = pv ? presence_json(*pv) : ordered_json();

    ordered_json events = ordered_json::object();
    std::optional<StoredEvent> newest_activity;
    for (const auto& [kind, se] : latest) {
        events[std::string(to_string(kind))] = ordered_json::parse(se.raw);
        if (se.event.activity && !se.event.alert &&
            (!newest_activity || std::pair{se.event.timestamp_ms, se.event.seq} >
                                     std::pair{newest_activity->event.timestamp_ms, newest_activity->event.seq})) {
            newest_activity = se;
        }
    }
    out["activity"] = newest_activity ? activity_json(*newest_activity->event.activity) : ordered_json();
    if (auto it = latest.find(SensorKind::Light); it != latest.end()) {
        const double lux = it->second.event.scalar();
        out["light"] = {{"lux", lux}, {"label", edge::to_string(edge::interpret_light(lux).label)}};
    } else {
        out["light"] = nullptr;
    }
    out["events"] = std::move(events);
    return out;
}

ordered_json AggregationService::stats_json() const
{
    const auto s = store_->stats();
    std::uint64_t stream_drops = closed_stream_drops_.load();
    std::size_t streams = 0;
    {
        std::lock_guard lock(streams_mutex_);
        streams = streams_.size();
        for (const auto& st : streams_) {
            stream_drops += st.queue->dropped();
        }
    }
    ordered_json out;
    out["ingested"] = ingested_.load();
    out["stored"] = s.stored;
    out["duplicates"] = s.duplicates;
    out["evicted"] = s.evicted;
    out["corrupt_lines"] = s.corrupt_lines;
    out["presence_updates"] = presence_updates_.load();
    out["streams"] = streams;
    out["stream_drops"] = stream_drops;
    std::uint64_t delivery_drops = 0;
    {
        std::lock_guard lock(client_mutex_);
        if (client_) {
            delivery_drops = client_->dropped_deliveries();
        }
    }
    out["delivery_drops"] = delivery_drops;
    out["broker_connected"] = connected_.load();
    return out;
}

}  // namespace rescue::agg
