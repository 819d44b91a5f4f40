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

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

namespace rescue {

enum class SensorKind : std::uint8_t { Accelerometer, Barometer, Thermometer, Humidity, Light, Gps };

inline constexpr std::array<SensorKind, 6> kAllKinds = {
    SensorKind::Accelerometer, SensorKind::Barometer, SensorKind::Thermometer,
    SensorKind::Humidity,      SensorKind::Light,     SensorKind::Gps};

std::string_view to_string(SensorKind kind) noexcept;
std::optional<SensorKind> parse_kind(std::string_view name) noexcept;

/// The one unit string each kind is published with.
std::string_view unit_for(SensorKind kind) noexcept;

enum class ActivityState : std::uint8_t { Still, Walking, Running, InVehicle, Unknown };

inline constexpr std::array<ActivityState, 5> kAllStates = {
    ActivityState::Still, ActivityState::Walking, ActivityState::Running, ActivityState::InVehicle,
    ActivityState::Unknown};

std::string_view to_string(ActivityState state) noexcept;
std::optional<ActivityState> parse_state(std::string_view name) noexcept;

struct GeoPosition {
    double lat = 0.0;
    double lon = 0.0;
    double accuracy_m = 0.0;

    friend bool operator==(const GeoPosition&, const GeoPosition&) = default;
};

struct ActivityEstimate {
    ActivityState state = ActivityState::Unknown;
    int confidence = 0;

    friend bool operator==(const ActivityEstimate&, const ActivityEstimate&) = default;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const noexcept;
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Scalar reading, or an (x, y, z) triple in g for the accelerometer.
using SensorValue = std::variant<double, Vec3>;

/// Marks an event that reports a detected condition rather than a plain reading.
enum class AlertMarker : std::uint8_t { Fall };

std::string_view to_string(AlertMarker marker) noexcept;

struct SensorEvent {
    std::string event_id;
    std::string publisher_id;
    std::int64_t seq = 0;
    std::int64_t timestamp_ms = 0;
    SensorKind kind = SensorKind::Thermometer;
    SensorValue value = 0.0;
    std::string unit;
    GeoPosition position;
    std::optional<ActivityEstimate> activity;
    std::optional<AlertMarker> alert;

    /// Scalar used for comparisons and aggregation: the value itself, or the
    /// vector magnitude for accelerometer triples.
    double scalar() const noexcept;

    friend bool operator==(const SensorEvent&, const SensorEvent&) = default;
};

enum class ValidationErrc {
    UnknownKind,
    OutOfRangePosition,
    ArityMismatch,
    NonFiniteValue,
    UnitMismatch,
    MissingField,
    BadIdentifier,
    BadActivity,
};

std::string_view to_string(ValidationErrc code) noexcept;

class ValidationError : public std::runtime_error {
public:
    ValidationError(ValidationErrc code, std::string field, const std::string& detail);

    ValidationErrc code() const noexcept { return code_; }
    const std::string& field() const noexcept { return field_; }

private:
    ValidationErrc code_;
    std::string field_;
};

/// Opaque installation code: non-empty printable ASCII, at most 64 bytes.
bool is_valid_client_id(std::string_view id) noexcept;

/// Checks every field invariant of a decoded record and builds the event.
/// Throws ValidationError naming the offending field.
SensorEvent validate_event(const nlohmann::json& raw);

/// Same checks applied to an already-typed event.
void check_event(const SensorEvent& event);

/// Canonical single-line JSON: fixed key order, no raw newlines, optional
/// fields omitted when absent.
std::string canonical_encode(const SensorEvent& event);

/// Parses one canonical (or any key-order) event object and validates it.
SensorEvent canonical_decode(std::string_view text);

nlohmann::ordered_json to_json(const GeoPosition& pos);

}  // namespace rescue
