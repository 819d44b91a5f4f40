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
#include "rescue/client.hpp"

#include <cstdio>
#include <random>

#include "rescue/predicate.hpp"

namespace rescue::client {

namespace {

std::string random_hex(std::size_t digits)
{
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::string out;
    while (out.size() < digits) {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(rng()));
        out += buf;
    }
    out.resize(digits);
    return out;
}

}  // namespace

std::string_view to_string(ClientErrc code) noexcept
{
    switch (code) {
    case ClientErrc::ConnectionRefused:
        return "ConnectionRefused";
    case ClientErrc::HandshakeTimeout:
        return "HandshakeTimeout";
    case ClientErrc::VersionMismatch:
        return "VersionMismatch";
    case ClientErrc::Rejected:
        return "Rejected";
    case ClientErrc::NotAPublisher:
        return "NotAPublisher";
    case ClientErrc::NotASubscriber:
        return "NotASubscriber";
    case ClientErrc::SessionClosed:
        return "SessionClosed";
    case ClientErrc::EventInvalid:
        return "EventInvalid";
    case ClientErrc::InvalidPredicate:
        return "InvalidPredicate";
    case ClientErrc::TooManySubscriptions:
        return "TooManySubscriptions";
    case ClientErrc::Timeout:
        return "Timeout";
    }
    return "ClientError";
}

ClientError::ClientError(ClientErrc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail)
    , code_(code)
{
}

std::string generate_client_id()
{
    return "ic-" + random_hex(16);
}

Client::Client(ClientConfig config) : config_(std::move(config)), nonce_(random_hex(8)) {}

std::unique_ptr<Client> Client::connect(const ClientConfig& config)
{
    if (!is_valid_client_id(config.client_id)) {
        throw ClientError(ClientErrc::Rejected, "client_id must be 1..64 printable ASCII bytes");
    }
    std::unique_ptr<Client> c(new Client(config));
    const int timeout_ms = static_cast<int>(config.timeout.count());
    try {
        c->socket_ = net::connect_tcp(config.broker, timeout_ms);
    } catch (const std::system_error& e) {
        if (e.code() == std::errc::timed_out) {
            throw ClientError(ClientErrc::HandshakeTimeout, "connecting to " + config.broker.to_string());
        }
        throw ClientError(ClientErrc::ConnectionRefused, config.broker.to_string() + ": " + e.what());
    }
    c->reader_ = std::make_unique<net::LineReader>(c->socket_.fd(), proto::kMaxFrameBytes);

    try {
        net::write_all(c->socket_.fd(), proto::encode_frame(proto::Hello{std::string(proto::kVersion), config.role,
                                                                         config.client_id}));
    } catch (const std::system_error& e) {
        throw ClientError(ClientErrc::ConnectionRefused, e.what());
    }

    std::string line;
    switch (c->reader_->read_line(line, timeout_ms)) {
    case net::LineReader::Status::Line:
        break;
    case net::LineReader::Status::Timeout:
        throw ClientError(ClientErrc::HandshakeTimeout, "no HELLO_ACK within the handshake timeout");
    default:
        throw ClientError(ClientErrc::ConnectionRefused, "broker closed the connection during the handshake");
    }
    proto::Frame reply;
    try {
        reply = proto::decode_frame(line);
    } catch (const proto::ProtocolError& e) {
        throw ClientError(ClientErrc::Rejected, e.what());
    }
    if (const auto* ack = std::get_if<proto::HelloAck>(&reply)) {
        if (ack->version != proto::kVersion) {
            throw ClientError(ClientErrc::VersionMismatch, "broker speaks " + ack->version);
        }
    } else if (const auto* err = std::get_if<proto::Error>(&reply)) {
        throw ClientError(err->code == "VersionMismatch" ? ClientErrc::VersionMismatch : ClientErrc::Rejected,
                          err->message);
    } else {
        throw ClientError(ClientErrc::Rejected, "expected HELLO_ACK");
    }

    auto* raw = c.get();
    c->reader_thread_ = std::thread([raw] { raw->read_loop(); });
    if (proto::can_publish(config.role)) {
        c->heartbeat_thread_ = std::thread([raw] { raw->heartbeat_loop(); });
    }
    return c;
}

Client::~Client()
{
    close();
}

SensorEvent Client::make_event(SensorKind kind, SensorValue value, const GeoPosition& position,
                               std::int64_t timestamp_ms, std::optional<ActivityEstimate> activity)
{
    SensorEvent e;
    e.seq = next_seq_.fetch_add(1);
    e.event_id = config_.client_id + ":" + nonce_ + ":" + std::to_string(e.seq);
    e.publisher_id = config_.client_id;
    e.timestamp_ms = timestamp_ms;
    e.kind = kind;
    e.value = std::move(value);
    e.unit = std::string(unit_for(kind));
    e.position = position;
    e.activity = activity;
    return e;
}

void Client::send_line(const std::string& line)
{
    if (closed_.load()) {
        throw ClientError(ClientErrc::SessionClosed, "session is closed");
    }
    std::lock_guard lock(write_mutex_);
    try {
        net::write_all(socket_.fd(), line);
    } catch (const std::system_error& e) {
        mark_closed();
        throw ClientError(ClientErrc::SessionClosed, e.what());
    }
}

void Client::publish(const SensorEvent& event)
{
    if (!proto::can_publish(config_.role)) {
        throw ClientError(ClientErrc::NotAPublisher, "client was opened as a subscriber");
    }
    if (closed_.load()) {
        throw ClientError(ClientErrc::SessionClosed, "session is closed");
    }
    if (event.publisher_id != config_.client_id) {
        throw ClientError(ClientErrc::EventInvalid, "publisher_id must equal the client's installation code");
    }
    try {
        check_event(event);
    } catch (const ValidationError& e) {
        throw ClientError(ClientErrc::EventInvalid, e.what());
    }
    if (event.seq <= last_seq_.load()) {
        throw ClientError(ClientErrc::EventInvalid, "sequence numbers must strictly increase");
    }
    send_line(proto::encode_frame(proto::Publish{event}));
    last_seq_.store(event.seq);
}

std::string Client::subscribe(std::string_view filter)
{
    if (!proto::can_subscribe(config_.role)) {
        throw ClientError(ClientErrc::NotASubscriber, "client was opened as a publisher");
    }
    try {
        (void)parse_predicate(filter);
    } catch (const PredicateError& e) {
        throw ClientError(ClientErrc::InvalidPredicate, e.what());
    }

    std::lock_guard serial(subscribe_mutex_);
    send_line(proto::encode_frame(proto::Subscribe{std::string(filter)}));

    std::unique_lock lock(reply_mutex_);
    if (!reply_cv_.wait_for(lock, config_.timeout, [&] { return !replies_.empty() || closed_.load(); })) {
        throw ClientError(ClientErrc::Timeout, "no SUBSCRIBE_ACK from the broker");
    }
    if (replies_.empty()) {
        throw ClientError(ClientErrc::SessionClosed, "session closed while subscribing");
    }
    auto reply = std::move(replies_.front());
    replies_.pop_front();
    if (const auto* ack = std::get_if<proto::SubscribeAck>(&reply)) {
        return ack->subscription_id;
    }
    const auto& err = std::get<proto::Error>(reply);
    if (err.code == "InvalidPredicate") {
        throw ClientError(ClientErrc::InvalidPredicate, err.message);
    }
    if (err.code == "TooManySubscriptions") {
        throw ClientError(ClientErrc::TooManySubscriptions, err.message);
    }
    if (err.code == "NotASubscriber") {
        throw ClientError(ClientErrc::NotASubscriber, err.message);
    }
    throw ClientError(ClientErrc::Rejected, err.code + ": " + err.message);
}

void Client::unsubscribe(const std::string& subscription_id)
{
    send_line(proto::encode_frame(proto::Unsubscribe{subscription_id}));
}

std::optional<Delivery> Client::next(std::chrono::milliseconds timeout)
{
    std::unique_lock lock(delivery_mutex_);
    delivery_cv_.wait_for(lock, timeout, [&] { return !deliveries_.empty() || closed_.load(); });
    if (deliveries_.empty()) {
        return std::nullopt;
    }
    auto d = std::move(deliveries_.front());
    deliveries_.pop_front();
    return d;
}

void Client::read_loop()
{
    std::string line;
    while (!stopping_.load()) {
        const auto st = reader_->read_line(line);
        if (st != net::LineReader::Status::Line) {
            break;
        }
        proto::Frame frame;
        try {
            frame = proto::decode_frame(line);
        } catch (const proto::ProtocolError&) {
            continue;
        }
        if (auto* n = std::get_if<proto::Notify>(&frame)) {
            std::lock_guard lock(delivery_mutex_);
            if (deliveries_.size() >= config_.delivery_cap) {
                dropped_.fetch_add(1);
            } else {
                deliveries_.emplace_back(std::move(*n));
            }
            delivery_cv_.notify_one();
        } else if (auto* p = std::get_if<proto::Presence>(&frame)) {
            std::lock_guard lock(delivery_mutex_);
            if (deliveries_.size() >= config_.delivery_cap) {
                dropped_.fetch_add(1);
            } else {
                deliveries_.emplace_back(std::move(*p));
            }
            delivery_cv_.notify_one();
        } else if (auto* ack = std::get_if<proto::SubscribeAck>(&frame)) {
            std::lock_guard lock(reply_mutex_);
            replies_.emplace_back(std::move(*ack));
            reply_cv_.notify_all();
        } else if (auto* err = std::get_if<proto::Error>(&frame)) {
            if (err->in_reply_to == "SUBSCRIBE") {
                std::lock_guard lock(reply_mutex_);
                replies_.emplace_back(std::move(*err));
                reply_cv_.notify_all();
            }
        }
    }
    mark_closed();
}

void Client::heartbeat_loop()
{
    std::unique_lock lock(heartbeat_mutex_);
    while (!stopping_.load() && !closed_.load()) {
        heartbeat_cv_.wait_for(lock, config_.heartbeat_interval, [&] { return stopping_.load(); });
        if (stopping_.load() || closed_.load()) {
            break;
        }
        try {
            send_line(proto::encode_frame(proto::Heartbeat{config_.client_id}));
        } catch (const ClientError&) {
            break;
        }
    }
}

void Client::mark_closed()
{
    closed_.store(true);
    {
        std::lock_guard lock(delivery_mutex_);
    }
    delivery_cv_.notify_all();
    {
        std::lock_guard lock(reply_mutex_);
    }
    reply_cv_.notify_all();
    {
        std::lock_guard lock(heartbeat_mutex_);
    }
    heartbeat_cv_.notify_all();
}

void Client::join_threads()
{
    stopping_.store(true);
    {
        std::lock_guard lock(heartbeat_mutex_);
    }
    heartbeat_cv_.notify_all();
    socket_.shutdown();
    if (reader_thread_.joinable() && reader_thread_.get_id() != std::this_thread::get_id()) {
        reader_thread_.join();
    }
    if (heartbeat_thread_.joinable() && heartbeat_thread_.get_id() != std::this_thread::get_id()) {
        heartbeat_thread_.join();
    }
}

void Client::close()
{
    if (stopping_.load()) {
        return;
    }
    if (!closed_.load()) {
        try {
            std::lock_guard lock(write_mutex_);
            net::write_all(socket_.fd(), proto::encode_frame(proto::Bye{}));
        } catch (const std::system_error&) {
        }
    }
    mark_closed();
    join_threads();
}

void Client::abort()
{
    if (stopping_.load()) {
        return;
    }
    mark_closed();
    join_threads();
}

void Client::send_raw(std::string_view bytes)
{
    std::lock_guard lock(write_mutex_);
    try {
        net::write_all(socket_.fd(), bytes);
    } catch (const std::system_error& e) {
        throw ClientError(ClientErrc::SessionClosed, e.what());
    }
}

}  // namespace rescue::client
