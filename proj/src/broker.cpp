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
#include "rescue/broker.hpp"

#include <algorithm>

#include "rescue/kernels.hpp"

namespace rescue::broker {

using namespace std::chrono_literals;

// ---------------------------------------------------------------------------
// Outbox

bool Outbox::offer(std::string line)
{
    {
        std::lock_guard lock(mutex_);
        if (closed_) {
            return false;
        }
        if (queue_.size() >= cap_) {
            dropped_.fetch_add(1);
            return false;
        }
        queue_.push_back(std::move(line));
    }
    cv_.notify_one();
    return true;
}

void Outbox::force(std::string line)
{
    {
        std::lock_guard lock(mutex_);
        if (closed_) {
            return;
        }
        queue_.push_back(std::move(line));
    }
    cv_.notify_one();
}

std::optional<std::string> Outbox::pop(std::chrono::milliseconds wait)
{
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, wait, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) {
        return std::nullopt;
    }
    auto line = std::move(queue_.front());
    queue_.pop_front();
    return line;
}

std::vector<std::string> Outbox::drain()
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
    queue_.clear();
    return out;
}

void Outbox::close()
{
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Outbox::closed() const
{
    std::lock_guard lock(mutex_);
    return closed_;
}

bool Outbox::closed_and_empty() const
{
    std::lock_guard lock(mutex_);
    return closed_ && queue_.empty();
}

std::size_t Outbox::size() const
{
    std::lock_guard lock(mutex_);
    return queue_.size();
}

// ---------------------------------------------------------------------------
// Broker

Broker::Broker(BrokerOptions options, std::shared_ptr<const Clock> clock, JsonLog* log)
    : options_(options)
    , clock_(std::move(clock))
    , log_(log)
{
}

SessionPtr Broker::open_session(const proto::Hello& hello)
{
    if (hello.version != proto::kVersion) {
        throw BrokerError("VersionMismatch", "broker speaks " + std::string(proto::kVersion) + ", client sent " +
                                                 hello.version);
    }
    if (!is_valid_client_id(hello.client_id)) {
        throw BrokerError("BadClientId", "client_id must be 1..64 printable ASCII bytes");
    }
    auto session = std::make_shared<Session>(next_session_.fetch_add(1), hello.client_id, hello.role,
                                             clock_->now_ms(), options_.queue_cap);
    session->outbox.force(proto::encode_frame(proto::HelloAck{}));
    {
        std::unique_lock lock(sessions_mutex_);
        sessions_.emplace(session->id, session);
    }
    if (log_) {
        log_->write("session_open", {{"session", session->id},
                                     {"client_id", session->client_id},
                                     {"role", proto::to_string(session->role)}});
    }
    if (proto::can_publish(session->role)) {
        touch_publisher(session->client_id, std::nullopt);
    }
    return session;
}

void Broker::reply_error(Session& session, std::string code, std::string message, std::string_view in_reply_to)
{
    session.outbox.force(
        proto::encode_frame(proto::Error{std::move(code), std::move(message), std::string(in_reply_to)}));
}

bool Broker::handle(Session& session, const proto::Frame& frame)
{
    try {
        if (const auto* f = std::get_if<proto::Publish>(&frame)) {
            route(f->event, session);
        } else if (const auto* f = std::get_if<proto::Subscribe>(&frame)) {
            auto ack = subscribe(session, f->filter);
            session.outbox.force(proto::encode_frame(ack));
        } else if (const auto* f = std::get_if<proto::Unsubscribe>(&frame)) {
            if (!unsubscribe(session, f->subscription_id)) {
                throw BrokerError("UnknownSubscription", "no subscription \"" + f->subscription_id + "\"");
            }
        } else if (std::holds_alternative<proto::Heartbeat>(frame)) {
            heartbeat(session);
        } else if (std::holds_alternative<proto::Bye>(frame)) {
            disconnect(session, true);
            return false;
        } else if (std::holds_alternative<proto::Hello>(frame)) {
            throw BrokerError("AlreadyGreeted", "HELLO is only valid as the first frame");
        } else {
            throw BrokerError("UnexpectedFrame", std::string(proto::type_name(frame)) + " is not sent to the broker");
        }
    } catch (const BrokerError& e) {
        reply_error(session, e.code(), e.what(), proto::type_name(frame));
    }
    return true;
}

void Broker::touch_publisher(const std::string& publisher_id, const std::optional<GeoPosition>& position)
{
    std::lock_guard lock(presence_mutex_);
    const auto now = clock_->now_ms();
    auto [it, inserted] = presence_.try_emplace(publisher_id);
    auto& rec = it->second;
    const bool reappeared = inserted || rec.stale;
    rec.last_seen_ms = now;
    rec.stale = false;
    if (position) {
        rec.last_position = position;
    }
    if (reappeared) {
        broadcast_presence(proto::Presence{publisher_id, proto::PresenceState::Fresh, now, rec.last_position});
    }
}

void Broker::broadcast_presence(const proto::Presence& p)
{
    const auto line = proto::encode_frame(p);
    {
        std::shared_lock lock(sessions_mutex_);
        for (const auto& [id, s] : sessions_) {
            if (proto::can_subscribe(s->role) && s->open.load()) {
                if (!s->outbox.offer(line)) {
                    drops_.fetch_add(1);
                }
            }
        }
    }
    if (log_) {
        log_->write("presence", {{"publisher_id", p.publisher_id},
                                 {"state", proto::to_string(p.state)},
                                 {"last_seen_ms", p.last_seen_ms}});
    }
}

DeliveryReport Broker::route(const SensorEvent& event, const Session& from)
{
    if (!proto::can_publish(from.role)) {
        throw BrokerError("NotAPublisher", "session was not opened with a publishing role");
    }
    if (event.publisher_id != from.client_id) {
        throw BrokerError("PublisherMismatch", "publisher_id must equal the session's client_id");
    }
    touch_publisher(from.client_id, event.position);

    DeliveryReport report;
    report.event_id = event.event_id;

    const auto snap = registry_.snapshot();
    const auto hits = kernels::match_indices(snap->predicates, event);

    // Group matching subscriptions by owning session, keeping registry order.
    std::vector<std::pair<std::uint64_t, std::vector<std::string>>> groups;
    for (auto i : hits) {
        const auto owner = snap->owners[i];
        if (owner == from.id) {
            continue;
        }
        auto g = std::find_if(groups.begin(), groups.end(), [&](const auto& p) { return p.first == owner; });
        if (g == groups.end()) {
            groups.emplace_back(owner, std::vector<std::string>{});
            g = std::prev(groups.end());
        }
        g->second.push_back(snap->predicates[i].subscription_id);
    }

    if (!groups.empty()) {
        const auto canonical = canonical_encode(event);
        std::shared_lock lock(sessions_mutex_);
        for (auto& [owner, ids] : groups) {
            auto it = sessions_.find(owner);
            if (it == sessions_.end() || !it->second->open.load()) {
                continue;
            }
            const bool ok = it->second->outbox.offer(proto::encode_notify_line(ids, canonical));
            report.outcomes.push_back({owner, ok});
            ok ? ++report.delivered : ++report.dropped;
        }
    }

    events_routed_.fetch_add(1);
    deliveries_.fetch_add(report.delivered);
    drops_.fetch_add(report.dropped);
    if (log_) {
        log_->write("route", {{"event_id", event.event_id},
                              {"publisher_id", event.publisher_id},
                              {"delivered", report.delivered},
                              {"dropped", report.dropped}});
    }
    return report;
}

proto::SubscribeAck Broker::subscribe(Session& session, std::string_view filter)
{
    if (!proto::can_subscribe(session.role)) {
        throw BrokerError("NotASubscriber", "session was not opened with a subscribing role");
    }
    if (registry_.count_for(session.id) >= options_.max_subscriptions) {
        throw BrokerError("TooManySubscriptions",
                          "at most " + std::to_string(options_.max_subscriptions) + " subscriptions per session");
    }
    SubscriptionPredicate pred;
    try {
        pred = parse_predicate(filter);
    } catch (const PredicateError& e) {
        throw BrokerError("InvalidPredicate", e.what());
    }
    pred.subscription_id = std::to_string(session.id) + "." + std::to_string(session.next_subscription.fetch_add(1));
    proto::SubscribeAck ack{pred.subscription_id, std::string(filter)};
    registry_.add(session.id, std::move(pred));
    if (log_) {
        log_->write("subscribe",
                    {{"session", session.id}, {"subscription_id", ack.subscription_id}, {"filter", ack.filter}});
    }
    return ack;
}

bool Broker::unsubscribe(Session& session, std::string_view subscription_id)
{
    return registry_.remove(session.id, subscription_id);
}

void Broker::heartbeat(Session& session)
{
    if (proto::can_publish(session.role)) {
        touch_publisher(session.client_id, std::nullopt);
    }
}

std::vector<proto::Presence> Broker::heartbeat_scan(std::int64_t now_ms)
{
    std::vector<proto::Presence> transitions;
    std::lock_guard lock(presence_mutex_);
    for (auto it = presence_.begin(); it != presence_.end();) {
        auto& rec = it->second;
        const auto silent = now_ms - rec.last_seen_ms;
        if (!rec.stale && silent > options_.stale_after_ms) {
            rec.stale = true;
            transitions.push_back({it->first, proto::PresenceState::Stale, rec.last_seen_ms, rec.last_position});
        }
        if (silent > options_.gone_after_ms) {
            transitions.push_back({it->first, proto::PresenceState::Gone, rec.last_seen_ms, rec.last_position});
            it = presence_.erase(it);
            continue;
        }
        ++it;
    }
    for (const auto& t : transitions) {
        broadcast_presence(t);
    }
    return transitions;
}

bool Broker::has_other_live_session(const std::string& client_id, std::uint64_t except) const
{
    std::shared_lock lock(sessions_mutex_);
    return std::any_of(sessions_.begin(), sessions_.end(), [&](const auto& kv) {
        return kv.first != except && kv.second->client_id == client_id && proto::can_publish(kv.second->role);
    });
}

void Broker::disconnect(Session& session, bool explicit_bye)
{
    if (!session.open.exchange(false)) {
        return;
    }
    {
        std::unique_lock lock(sessions_mutex_);
        sessions_.erase(session.id);
    }
    registry_.remove_owner(session.id);
    if (explicit_bye && proto::can_publish(session.role) && !has_other_live_session(session.client_id, session.id)) {
        std::lock_guard lock(presence_mutex_);
        auto it = presence_.find(session.client_id);
        if (it != presence_.end()) {
            proto::Presence gone{session.client_id, proto::PresenceState::Gone, it->second.last_seen_ms,
                                 it->second.last_position};
            presence_.erase(it);
            broadcast_presence(gone);
        }
    }
    session.outbox.close();
    if (log_) {
        log_->write("session_close", {{"session", session.id},
                                      {"client_id", session.client_id},
                                      {"reason", explicit_bye ? "bye" : "transport"}});
    }
}

void Broker::shutdown_all()
{
    {
        std::lock_guard lock(presence_mutex_);
        for (const auto& [id, rec] : presence_) {
            broadcast_presence({id, proto::PresenceState::Gone, rec.last_seen_ms, rec.last_position});
        }
        presence_.clear();
    }
    std::vector<SessionPtr> all;
    {
        std::unique_lock lock(sessions_mutex_);
        for (auto& [id, s] : sessions_) {
            all.push_back(s);
        }
        sessions_.clear();
    }
    for (auto& s : all) {
        s->open.store(false);
        registry_.remove_owner(s->id);
        s->outbox.close();
    }
}

BrokerStats Broker::stats() const
{
    BrokerStats s;
    s.events_routed = events_routed_.load();
    s.deliveries = deliveries_.load();
    s.drops = drops_.load();
    std::shared_lock lock(sessions_mutex_);
    s.active_sessions = sessions_.size();
    return s;
}

std::map<std::string, PresenceRecord> Broker::presence() const
{
    std::lock_guard lock(presence_mutex_);
    return presence_;
}

std::vector<SessionPtr> Broker::sessions() const
{
    std::shared_lock lock(sessions_mutex_);
    std::vector<SessionPtr> out;
    for (const auto& [id, s] : sessions_) {
        out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const SessionPtr& a, const SessionPtr& b) { return a->id < b->id; });
    return out;
}

// ---------------------------------------------------------------------------
// BrokerServer

BrokerServer::BrokerServer(ServerOptions options, std::shared_ptr<const Clock> clock, JsonLog* log)
    : options_(std::move(options))
    , log_(log)
    , broker_(options_.broker, std::move(clock), log)
{
}

BrokerServer::~BrokerServer()
{
    stop();
}

void BrokerServer::start()
{
    listener_ = net::listen_tcp(options_.host, options_.port);
    port_ = net::local_port(listener_);
    running_.store(true);
    accept_thread_ = std::thread([this] { accept_loop(); });
    scan_thread_ = std::thread([this] { scan_loop(); });
    if (log_) {
        log_->write("listening", {{"host", options_.host}, {"port", port_}});
    }
}

void BrokerServer::stop()
{
    if (!running_.exchange(false)) {
        return;
    }
    scan_cv_.notify_all();
    if (accept_thread_.joinable()) {
        accept_thread_.join();
    }
    if (scan_thread_.joinable()) {
        scan_thread_.join();
    }
    listener_.close();

    broker_.shutdown_all();

    // Give writers a moment to flush the final frames, then force the rest.
    const auto deadline = std::chrono::steady_clock::now() + 1s;
    while (std::chrono::steady_clock::now() < deadline) {
        std::lock_guard lock(conns_mutex_);
        if (std::all_of(conns_.begin(), conns_.end(), [](const auto& c) { return c->done.load(); })) {
            break;
        }
        std::this_thread::sleep_for(10ms);
    }
    {
        std::lock_guard lock(conns_mutex_);
        for (auto& c : conns_) {
            c->socket.shutdown();
        }
    }
    reap(true);
    if (log_) {
        log_->write("stopped");
    }
}

namespace {
constexpr int kSocketSendBuffer = 256 * 1024;
}  // namespace

void BrokerServer::accept_loop()
{
    while (running_.load()) {
        auto sock = net::accept_for(listener_, 100);
        if (sock) {
            // Bound what the kernel buffers for a stalled reader so that the
            // outbox cap is what decides when a slow consumer loses frames.
            net::set_send_buffer(sock->fd(), kSocketSendBuffer);
            auto conn = std::make_unique<Connection>();
            conn->socket = std::move(*sock);
            auto* raw = conn.get();
            std::lock_guard lock(conns_mutex_);
            conns_.push_back(std::move(conn));
            raw->reader = std::thread([this, raw] { serve(*raw); });
        }
        reap(false);
    }
}

void BrokerServer::scan_loop()
{
    std::unique_lock lock(scan_mutex_);
    while (running_.load()) {
        scan_cv_.wait_for(lock, options_.scan_interval, [&] { return !running_.load(); });
        if (!running_.load()) {
            break;
        }
        broker_.heartbeat_scan(broker_.now_ms());
    }
}

void BrokerServer::reap(bool all)
{
    std::list<std::unique_ptr<Connection>> finished;
    {
        std::lock_guard lock(conns_mutex_);
        for (auto it = conns_.begin(); it != conns_.end();) {
            if (all || (*it)->done.load()) {
                finished.push_back(std::move(*it));
                it = conns_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& c : finished) {
        if (c->reader.joinable()) {
            c->reader.join();
        }
    }
}

void BrokerServer::write_loop(Connection& conn)
{
    auto& session = *conn.session;
    const auto& transcript = broker_.transcript();
    while (true) {
        auto line = session.outbox.pop(200ms);
        if (!line) {
            if (session.outbox.closed_and_empty()) {
                break;
            }
            continue;
        }
        try {
            net::write_all(conn.socket.fd(), *line);
        } catch (const std::system_error&) {
            break;
        }
        if (transcript) {
            transcript(session, Direction::Out, *line);
        }
    }
    conn.socket.shutdown();
}

void BrokerServer::serve(Connection& conn)
{
    net::LineReader reader(conn.socket.fd(), proto::kMaxFrameBytes);
    std::string line;

    auto refuse = [&](std::string code, std::string message) {
        try {
            net::write_all(conn.socket.fd(), proto::encode_frame(proto::Error{std::move(code), std::move(message), {}}));
        } catch (const std::system_error&) {
        }
        conn.socket.shutdown();
        conn.done.store(true);
    };

    const auto status = reader.read_line(line, static_cast<int>(options_.handshake_timeout.count()));
    if (status == net::LineReader::Status::Oversize) {
        return refuse("OversizeFrame", "frame exceeds 64 KiB");
    }
    if (status != net::LineReader::Status::Line) {
        conn.socket.shutdown();
        conn.done.store(true);
        return;
    }
    proto::Frame first;
    try {
        first = proto::decode_frame(line);
    } catch (const proto::ProtocolError& e) {
        return refuse(std::string(proto::to_string(e.code())), e.what());
    }
    const auto* hello = std::get_if<proto::Hello>(&first);
    if (!hello) {
        return refuse("ExpectedHello", "the first frame must be HELLO");
    }
    try {
        conn.session = broker_.open_session(*hello);
    } catch (const BrokerError& e) {
        return refuse(e.code(), e.what());
    }
    auto& session = *conn.session;
    if (const auto& t = broker_.transcript()) {
        t(session, Direction::In, line);
    }
    conn.writer = std::thread([this, &conn] { write_loop(conn); });

    while (true) {
        const auto st = reader.read_line(line);
        if (st == net::LineReader::Status::Line) {
            if (const auto& t = broker_.transcript()) {
                t(session, Direction::In, line);
            }
            proto::Frame frame;
            try {
                frame = proto::decode_frame(line);
            } catch (const proto::ProtocolError& e) {
                // Fatal for this session only.
                broker_.reply_error(session, std::string(proto::to_string(e.code())), e.what(), {});
                broker_.disconnect(session, false);
                break;
            }
            if (!broker_.handle(session, frame)) {
                break;
            }
            continue;
        }
        if (st == net::LineReader::Status::Oversize) {
            broker_.reply_error(session, "OversizeFrame", "frame exceeds 64 KiB", {});
        }
        broker_.disconnect(session, false);
        break;
    }
    session.outbox.close();
    if (conn.writer.joinable()) {
        conn.writer.join();
    }
    conn.done.store(true);
}

}  // namespace rescue::broker
