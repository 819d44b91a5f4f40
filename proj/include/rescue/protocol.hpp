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

// Newline-delimited JSON frames exchanged between clients and the broker.
// Field lists are documented in docs/protocol.md.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rescue/model.hpp"

namespace rescue::proto {

inline constexpr std::string_view kVersion = "v1";
inline constexpr std::size_t kMaxFrameBytes = 64 * 1024;
inline constexpr std::uint16_t kDefaultPort = 7470;

enum class Role : std::uint8_t { Publisher, Subscriber, Both };

std::string_view to_string(Role role) noexcept;
std::optional<Role> parse_role(std::string_view name) noexcept;
inline bool can_publish(Role r) noexcept { return r != Role::Subscriber; }
inline bool can_subscribe(Role r) noexcept { return r != Role::Publisher; }

enum class PresenceState : std::uint8_t { Fresh, Stale, Gone };

std::string_view to_string(PresenceState state) noexcept;

struct Hello {
    std::string version{kVersion};
    Role role = Role::Publisher;
    std::string client_id;
    friend bool operator==(const Hello&, const Hello&) = default;
};
struct HelloAck {
    std::string version{kVersion};
    friend bool operator==(const HelloAck&, const HelloAck&) = default;
};
struct Publish {
    SensorEvent event;
    friend bool operator==(const Publish&, const Publish&) = default;
};
struct Subscribe {
    std::string filter;
    friend bool operator==(const Subscribe&, const Subscribe&) = default;
};
struct SubscribeAck {
    std::string subscription_id;
    std::string filter;
    friend bool operator==(const SubscribeAck&, const SubscribeAck&) = default;
};
struct Unsubscribe {
    std::string subscription_id;
    friend bool operator==(const Unsubscribe&, const Unsubscribe&) = default;
};
struct Notify {
    std::vector<std::string> subscription_ids;
    SensorEvent event;
    friend bool operator==(const Notify&, const Notify&) = default;
};
struct Heartbeat {
    std::string client_id;
    friend bool operator==(const Heartbeat&, const Heartbeat&) = default;
};
struct Presence {
    std::string publisher_id;
    PresenceState state = PresenceState::Fresh;
    std::int64_t last_seen_ms = 0;
    std::optional<GeoPosition> position;
    friend bool operator==(const Presence&, const Presence&) = default;
};
struct Bye {
    friend bool operator==(const Bye&, const Bye&) = default;
};
struct Error {
    std::string code;
    std::string message;
    /// Type of the frame that caused the error, when there is one.
    std::string in_reply_to;
    friend bool operator==(const Error&, const Error&) = default;
};

using Frame = std::variant<Hello, HelloAck, Publish, Subscribe, SubscribeAck, Unsubscribe, Notify, Heartbeat,
                           Presence, Bye, Error>;

std::string_view type_name(const Frame& frame) noexcept;

/// One line: the frame's JSON object followed by a single '\n'. Frames that
/// carry an event embed its canonical encoding verbatim as the last member.
std::string encode_frame(const Frame& frame);

/// NOTIFY line around an already-encoded canonical event; routing encodes
/// each event once and reuses it for every subscriber.
std::string encode_notify_line(const std::vector<std::string>& subscription_ids, std::string_view canonical_event);

/// The JSON object of a PRESENCE frame without the trailing newline.
std::string encode_presence_body(const Presence& presence);

enum class ProtocolErrc { MalformedFrame, UnknownFrameType, OversizeFrame };

std::string_view to_string(ProtocolErrc code) noexcept;

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(ProtocolErrc code, const std::string& detail);
    ProtocolErrc code() const noexcept { return code_; }

private:
    ProtocolErrc code_;
};

/// Decodes one line; a single trailing '\n' (and '\r') is tolerated.
Frame decode_frame(std::string_view line);

}  // namespace rescue::proto
