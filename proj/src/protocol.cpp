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
#include "rescue/protocol.hpp"

namespace rescue::proto {

namespace {

using ojson = nlohmann::ordered_json;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string with_event(const ojson& head, std::string_view canonical_event)
{
    // Dump the head without its closing brace and splice the canonical event in.
    std::string out = head.dump();
    out.pop_back();
    out += ",\"event\":";
    out += canonical_event;
    out += "}\n";
    return out;
}

ojson presence_json(const Presence& p)
{
    ojson j;
    j["type"] = "PRESENCE";
    j["publisher_id"] = p.publisher_id;
    j["state"] = to_string(p.state);
    j["last_seen_ms"] = p.last_seen_ms;
    if (p.position) {
        j["position"] = to_json(*p.position);
    }
    return j;
}

const nlohmann::json& field(const nlohmann::json& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ProtocolError(ProtocolErrc::MalformedFrame, std::string("missing field \"") + key + "\"");
    }
    return *it;
}

std::string string_field(const nlohmann::json& obj, const char* key)
{
    const auto& v = field(obj, key);
    if (!v.is_string()) {
        throw ProtocolError(ProtocolErrc::MalformedFrame, std::string("field \"") + key + "\" must be a string");
    }
    return v.get<std::string>();
}

SensorEvent event_field(const nlohmann::json& obj)
{
    try {
        return validate_event(field(obj, "event"));
    } catch (const ValidationError& e) {
        throw ProtocolError(ProtocolErrc::MalformedFrame, std::string("invalid event: ") + e.what());
    }
}

}  // namespace

std::string_view to_string(Role role) noexcept
{
    switch (role) {
    case Role::Publisher:
        return "publisher";
    case Role::Subscriber:
        return "subscriber";
    case Role::Both:
        return "both";
    }
    return "publisher";
}

std::optional<Role> parse_role(std::string_view name) noexcept
{
    if (name == "publisher") {
        return Role::Publisher;
    }
    if (name == "subscriber") {
        return Role::Subscriber;
    }
    if (name == "both") {
        return Role::Both;
    }
    return std::nullopt;
}

std::string_view to_string(PresenceState state) noexcept
{
    switch (state) {
    case PresenceState::Fresh:
        return "FRESH";
    case PresenceState::Stale:
        return "STALE";
    case PresenceState::Gone:
        return "GONE";
    }
    return "FRESH";
}

std::string_view type_name(const Frame& frame) noexcept
{
    static constexpr std::string_view names[] = {"HELLO",  "HELLO_ACK", "PUBLISH",  "SUBSCRIBE", "SUBSCRIBE_ACK",
                                                 "UNSUBSCRIBE", "NOTIFY", "HEARTBEAT", "PRESENCE",  "BYE",
                                                 "ERROR"};
    return names[frame.index()];
}

std::string encode_notify_line(const std::vector<std::string>& subscription_ids, std::string_view canonical_event)
{
    ojson j;
    j["type"] = "NOTIFY";
    j["subscription_ids"] = subscription_ids;
    return with_event(j, canonical_event);
}

std::string encode_presence_body(const Presence& presence)
{
    return presence_json(presence).dump();
}

std::string encode_frame(const Frame& frame)
{
    return std::visit(
        overloaded{
            [](const Hello& f) {
                ojson j;
                j["type"] = "HELLO";
                j["version"] = f.version;
                j["role"] = to_string(f.role);
                j["client_id"] = f.client_id;
                return j.dump() + "\n";
            },
            [](const HelloAck& f) {
                ojson j;
                j["type"] = "HELLO_ACK";
                j["version"] = f.version;
                return j.dump() + "\n";
            },
            [](const Publish& f) {
                ojson j;
                j["type"] = "PUBLISH";
                return with_event(j, canonical_encode(f.event));
            },
            [](const Subscribe& f) {
                ojson j;
                j["type"] = "SUBSCRIBE";
                j["filter"] = f.filter;
                return j.dump() + "\n";
            },
            [](const SubscribeAck& f) {
                ojson j;
                j["type"] = "SUBSCRIBE_ACK";
                j["subscription_id"] = f.subscription_id;
                j["filter"] = f.filter;
                return j.dump() + "\n";
            },
            [](const Unsubscribe& f) {
                ojson j;
                j["type"] = "UNSUBSCRIBE";
                j["subscription_id"] = f.subscription_id;
                return j.dump() + "\n";
            },
            [](const Notify& f) { return encode_notify_line(f.subscription_ids, canonical_encode(f.event)); },
            [](const Heartbeat& f) {
                ojson j;
                j["type"] = "HEARTBEAT";
                j["client_id"] = f.client_id;
                return j.dump() + "\n";
            },
            [](const Presence& f) { return presence_json(f).dump() + "\n"; },
            [](const Bye&) { return std::string("{\"type\":\"BYE\"}\n"); },
            [](const Error& f) {
                ojson j;
                j["type"] = "ERROR";
                j["code"] = f.code;
                j["message"] = f.message;
                if (!f.in_reply_to.empty()) {
                    j["in_reply_to"] = f.in_reply_to;
                }
                return j.dump() + "\n";
            },
        },
        frame);
}

std::string_view to_string(ProtocolErrc code) noexcept
{
    switch (code) {
    case ProtocolErrc::MalformedFrame:
        return "MalformedFrame";
    case ProtocolErrc::UnknownFrameType:
        return "UnknownFrameType";
    case ProtocolErrc::OversizeFrame:
        return "OversizeFrame";
    }
    return "MalformedFrame";
}

ProtocolError::ProtocolError(ProtocolErrc code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail)
    , code_(code)
{
}

Frame decode_frame(std::string_view line)
{
    if (line.size() > kMaxFrameBytes) {
        throw ProtocolError(ProtocolErrc::OversizeFrame, "frame exceeds 64 KiB");
    }
    if (!line.empty() && line.back() == '\n') {
        line.remove_suffix(1);
    }
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ProtocolError(ProtocolErrc::MalformedFrame, "not a JSON object");
    }
    const auto type = string_field(j, "type");

    if (type == "HELLO") {
        Hello f;
        f.version = string_field(j, "version");
        const auto role = parse_role(string_field(j, "role"));
        if (!role) {
            throw ProtocolError(ProtocolErrc::MalformedFrame, "role must be publisher, subscriber or both");
        }
        f.role = *role;
        f.client_id = string_field(j, "client_id");
        return f;
    }
    if (type == "HELLO_ACK") {
        return HelloAck{string_field(j, "version")};
    }
    if (type == "PUBLISH") {
        return Publish{event_field(j)};
    }
    if (type == "SUBSCRIBE") {
        return Subscribe{string_field(j, "filter")};
    }
    if (type == "SUBSCRIBE_ACK") {
        return SubscribeAck{string_field(j, "subscription_id"), string_field(j, "filter")};
    }
    if (type == "UNSUBSCRIBE") {
        return Unsubscribe{string_field(j, "subscription_id")};
    }
    if (type == "NOTIFY") {
        Notify f;
        const auto& ids = field(j, "subscription_ids");
        if (!ids.is_array()) {
            throw ProtocolError(ProtocolErrc::MalformedFrame, "subscription_ids must be an array");
        }
        for (const auto& id : ids) {
            if (!id.is_string()) {
                throw ProtocolError(ProtocolErrc::MalformedFrame, "subscription ids are strings");
            }
            f.subscription_ids.push_back(id.get<std::string>());
        }
        f.event = event_field(j);
        return f;
    }
    if (type == "HEARTBEAT") {
        return Heartbeat{string_field(j, "client_id")};
    }
    if (type == "PRESENCE") {
        Presence f;
        f.publisher_id = string_field(j, "publisher_id");
        const auto state = string_field(j, "state");
        if (state == "FRESH") {
            f.state = PresenceState::Fresh;
        } else if (state == "STALE") {
            f.state = PresenceState::Stale;
        } else if (state == "GONE") {
            f.state = PresenceState::Gone;
        } else {
            throw ProtocolError(ProtocolErrc::MalformedFrame, "unknown presence state \"" + state + "\"");
        }
        const auto& seen = field(j, "last_seen_ms");
        if (!seen.is_number_integer()) {
            throw ProtocolError(ProtocolErrc::MalformedFrame, "last_seen_ms must be an integer");
        }
        f.last_seen_ms = seen.get<std::int64_t>();
        if (auto p = j.find("position"); p != j.end()) {
            if (!p->is_object() || !p->contains("lat") || !p->contains("lon") || !p->contains("accuracy_m") ||
                !(*p)["lat"].is_number() || !(*p)["lon"].is_number() || !(*p)["accuracy_m"].is_number()) {
                throw ProtocolError(ProtocolErrc::MalformedFrame, "position needs lat, lon and accuracy_m");
            }
            f.position = GeoPosition{(*p)["lat"].get<double>(), (*p)["lon"].get<double>(),
                                     (*p)["accuracy_m"].get<double>()};
        }
        return f;
    }
    if (type == "BYE") {
        return Bye{};
    }
    if (type == "ERROR") {
        Error f{string_field(j, "code"), string_field(j, "message"), {}};
        if (j.contains("in_reply_to")) {
            f.in_reply_to = string_field(j, "in_reply_to");
        }
        return f;
    }
    throw ProtocolError(ProtocolErrc::UnknownFrameType, "unknown frame type \"" + type + "\"");
}

}  // namespace rescue::proto
