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
#include "rescue/model.hpp"

#include <cmath>

namespace rescue {

namespace {

constexpr std::array<std::string_view, 6> kKindNames = {"ACCELEROMETER", "BAROMETER", "THERMOMETER",
                                                        "HUMIDITY",      "LIGHT",     "GPS"};
constexpr std::array<std::string_view, 6> kUnits = {"g", "hpa", "celsius", "percent_rh", "lux", "degrees"};
constexpr std::array<std::string_view, 5> kStateNames = {"STILL", "WALKING", "RUNNING", "IN_VEHICLE",
                                                         "UNKNOWN"};

constexpr std::size_t kMaxEventIdLength = 128;

bool printable_ascii(std::string_view s) noexcept
{
    for (char c : s) {
        if (c < 0x21 || c > 0x7e) {
            return false;
        }
    }
    return true;
}

const nlohmann::json& require(const nlohmann::json& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        throw ValidationError(ValidationErrc::MissingField, key, "field is missing");
    }
    return *it;
}

double require_number(const nlohmann::json& v, const char* field, ValidationErrc when_bad)
{
    if (!v.is_number()) {
        throw ValidationError(when_bad, field, "expected a number");
    }
    return v.get<double>();
}

std::int64_t require_integer(const nlohmann::json& obj, const char* key)
{
    const auto& v = require(obj, key);
    if (!v.is_number_integer()) {
        throw ValidationError(ValidationErrc::MissingField, key, "expected an integer");
    }
    return v.get<std::int64_t>();
}

std::string require_string(const nlohmann::json& obj, const char* key)
{
    const auto& v = require(obj, key);
    if (!v.is_string()) {
        throw ValidationError(ValidationErrc::MissingField, key, "expected a string");
    }
    return v.get<std::string>();
}

void check_position(const GeoPosition& p)
{
    if (!(p.lat >= -90.0 && p.lat <= 90.0)) {
        throw ValidationError(ValidationErrc::OutOfRangePosition, "position.lat", "latitude outside [-90, 90]");
    }
    if (!(p.lon >= -180.0 && p.lon <= 180.0)) {
        throw ValidationError(ValidationErrc::OutOfRangePosition, "position.lon", "longitude outside [-180, 180]");
    }
    if (!std::isfinite(p.accuracy_m) || p.accuracy_m < 0.0) {
        throw ValidationError(ValidationErrc::OutOfRangePosition, "position.accuracy_m",
                              "accuracy must be finite and non-negative");
    }
}

}  // namespace

std::string_view to_string(SensorKind kind) noexcept
{
    return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<SensorKind> parse_kind(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) {
            return static_cast<SensorKind>(i);
        }
    }
    return std::nullopt;
}

std::string_view unit_for(SensorKind kind) noexcept
{
    return kUnits[static_cast<std::size_t>(kind)];
}

std::string_view to_string(ActivityState state) noexcept
{
    return kStateNames[static_cast<std::size_t>(state)];
}

std::optional<ActivityState> parse_state(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kStateNames.size(); ++i) {
        if (kStateNames[i] == name) {
            return static_cast<ActivityState>(i);
        }
    }
    return std::nullopt;
}

std::string_view to_string(AlertMarker marker) noexcept
{
    switch (marker) {
    case AlertMarker::Fall:
        return "FALL";
    }
    return "FALL";
}

double Vec3::norm() const noexcept
{
    return std::sqrt(x * x + y * y + z * z);
}

double SensorEvent::scalar() const noexcept
{
    if (const auto* v = std::get_if<Vec3>(&value)) {
        return v->norm();
    }
    return std::get<double>(value);
}

std::string_view to_string(ValidationErrc code) noexcept
{
    switch (code) {
    case ValidationErrc::UnknownKind:
        return "UnknownKind";
    case ValidationErrc::OutOfRangePosition:
        return "OutOfRangePosition";
    case ValidationErrc::ArityMismatch:
        return "ArityMismatch";
    case ValidationErrc::NonFiniteValue:
        return "NonFiniteValue";
    case ValidationErrc::UnitMismatch:
        return "UnitMismatch";
    case ValidationErrc::MissingField:
        return "MissingField";
    case ValidationErrc::BadIdentifier:
        return "BadIdentifier";
    case ValidationErrc::BadActivity:
        return "BadActivity";
    }
    return "ValidationError";
}

ValidationError::ValidationError(ValidationErrc code, std::string field, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + field + ": " + detail)
    , code_(code)
    , field_(std::move(field))
{
}

bool is_valid_client_id(std::string_view id) noexcept
{
    return !id.empty() && id.size() <= 64 && printable_ascii(id);
}

void check_event(const SensorEvent& e)
{
    if (e.event_id.empty() || e.event_id.size() > kMaxEventIdLength || !printable_ascii(e.event_id)) {
        throw ValidationError(ValidationErrc::BadIdentifier, "event_id", "must be 1..128 printable ASCII bytes");
    }
    if (!is_valid_client_id(e.publisher_id)) {
        throw ValidationError(ValidationErrc::BadIdentifier, "publisher_id", "must be 1..64 printable ASCII bytes");
    }
    if (e.seq < 1) {
        throw ValidationError(ValidationErrc::BadIdentifier, "seq", "sequence numbers start at 1");
    }
    if (e.timestamp_ms < 0) {
        throw ValidationError(ValidationErrc::OutOfRangePosition, "timestamp_ms", "must be non-negative");
    }
    const bool is_triple = std::holds_alternative<Vec3>(e.value);
    if (is_triple != (e.kind == SensorKind::Accelerometer)) {
        throw ValidationError(ValidationErrc::ArityMismatch, "value",
                              e.kind == SensorKind::Accelerometer ? "ACCELEROMETER needs three components"
                                                                  : "scalar kinds take exactly one component");
    }
    if (is_triple) {
        const auto& v = std::get<Vec3>(e.value);
        if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
            throw ValidationError(ValidationErrc::NonFiniteValue, "value", "components must be finite");
        }
    } else if (!std::isfinite(std::get<double>(e.value))) {
        throw ValidationError(ValidationErrc::NonFiniteValue, "value", "value must be finite");
    }
    if (e.unit != unit_for(e.kind)) {
        throw ValidationError(ValidationErrc::UnitMismatch, "unit",
                              "expected \"" + std::string(unit_for(e.kind)) + "\" for " +
                                  std::string(to_string(e.kind)));
    }
    check_position(e.position);
    if (e.activity && (e.activity->confidence < 0 || e.activity->confidence > 100)) {
        throw ValidationError(ValidationErrc::BadActivity, "activity.confidence", "must be in [0, 100]");
    }
    if (e.alert && e.kind != SensorKind::Accelerometer) {
        throw ValidationError(ValidationErrc::ArityMismatch, "alert", "alerts ride on ACCELEROMETER events");
    }
}

SensorEvent validate_event(const nlohmann::json& raw)
{
    if (!raw.is_object()) {
        throw ValidationError(ValidationErrc::MissingField, "event", "expected a JSON object");
    }
    SensorEvent e;
    e.event_id = require_string(raw, "event_id");
    e.publisher_id = require_string(raw, "publisher_id");
    e.seq = require_integer(raw, "seq");
    e.timestamp_ms = require_integer(raw, "timestamp_ms");

    const auto kind_name = require_string(raw, "kind");
    const auto kind = parse_kind(kind_name);
    if (!kind) {
        throw ValidationError(ValidationErrc::UnknownKind, "kind", "unknown sensor kind \"" + kind_name + "\"");
    }
    e.kind = *kind;

    auto it = raw.find("value");
    if (it == raw.end()) {
        throw ValidationError(ValidationErrc::MissingField, "value", "field is missing");
    }
    const auto& v = *it;
    if (v.is_array()) {
        if (e.kind != SensorKind::Accelerometer) {
            throw ValidationError(ValidationErrc::ArityMismatch, "value", "scalar kinds take exactly one component");
        }
        if (v.size() != 3) {
            throw ValidationError(ValidationErrc::ArityMismatch, "value", "ACCELEROMETER needs three components");
        }
        Vec3 triple;
        triple.x = v[0].is_null() ? NAN : require_number(v[0], "value", ValidationErrc::NonFiniteValue);
        triple.y = v[1].is_null() ? NAN : require_number(v[1], "value", ValidationErrc::NonFiniteValue);
        triple.z = v[2].is_null() ? NAN : require_number(v[2], "value", ValidationErrc::NonFiniteValue);
        e.value = triple;
    } else {
        if (e.kind == SensorKind::Accelerometer) {
            throw ValidationError(ValidationErrc::ArityMismatch, "value", "ACCELEROMETER needs three components");
        }
        // NaN and infinities serialize as null.
        e.value = v.is_null() ? NAN : require_number(v, "value", ValidationErrc::NonFiniteValue);
    }

    e.unit = require_string(raw, "unit");

    const auto& pos = require(raw, "position");
    if (!pos.is_object()) {
        throw ValidationError(ValidationErrc::MissingField, "position", "expected an object");
    }
    auto coord = [&](const char* key) {
        auto p = pos.find(key);
        if (p == pos.end()) {
            throw ValidationError(ValidationErrc::MissingField, std::string("position.") + key, "field is missing");
        }
        return p->is_null() ? NAN : require_number(*p, key, ValidationErrc::OutOfRangePosition);
    };
    e.position = GeoPosition{coord("lat"), coord("lon"), coord("accuracy_m")};

    if (auto a = raw.find("activity"); a != raw.end()) {
        if (!a->is_object()) {
            throw ValidationError(ValidationErrc::BadActivity, "activity", "expected an object");
        }
        const auto state_name = require_string(*a, "state");
        const auto state = parse_state(state_name);
        if (!state) {
            throw ValidationError(ValidationErrc::BadActivity, "activity.state", "unknown state \"" + state_name + "\"");
        }
        const auto& conf = require(*a, "confidence");
        if (!conf.is_number_integer()) {
            throw ValidationError(ValidationErrc::BadActivity, "activity.confidence", "must be an integer");
        }
        const auto c = conf.get<std::int64_t>();
        if (c < 0 || c > 100) {
            throw ValidationError(ValidationErrc::BadActivity, "activity.confidence", "must be in [0, 100]");
        }
        e.activity = ActivityEstimate{*state, static_cast<int>(c)};
    }

    if (auto al = raw.find("alert"); al != raw.end()) {
        if (!al->is_string() || al->get<std::string>() != "FALL") {
            throw ValidationError(ValidationErrc::MissingField, "alert", "the only alert marker is \"FALL\"");
        }
        e.alert = AlertMarker::Fall;
    }

    check_event(e);
    return e;
}

nlohmann::ordered_json to_json(const GeoPosition& pos)
{
    nlohmann::ordered_json j;
    j["lat"] = pos.lat;
    j["lon"] = pos.lon;
    j["accuracy_m"] = pos.accuracy_m;
    return j;
}

std::string canonical_encode(const SensorEvent& e)
{
    nlohmann::ordered_json j;
    j["event_id"] = e.event_id;
    j["publisher_id"] = e.publisher_id;
    j["seq"] = e.seq;
    j["timestamp_ms"] = e.timestamp_ms;
    j["kind"] = to_string(e.kind);
    if (const auto* v = std::get_if<Vec3>(&e.value)) {
        j["value"] = {v->x, v->y, v->z};
    } else {
        j["value"] = std::get<double>(e.value);
    }
    j["unit"] = e.unit;
    j["position"] = to_json(e.position);
    if (e.activity) {
        nlohmann::ordered_json a;
        a["state"] = to_string(e.activity->state);
        a["confidence"] = e.activity->confidence;
        j["activity"] = std::move(a);
    }
    if (e.alert) {
        j["alert"] = to_string(*e.alert);
    }
    return j.dump();
}

SensorEvent canonical_decode(std::string_view text)
{
    auto raw = nlohmann::json::parse(text.begin(), text.end(), nullptr, false);
    if (raw.is_discarded()) {
        throw ValidationError(ValidationErrc::MissingField, "event", "not valid JSON");
    }
    return validate_event(raw);
}

}  // namespace rescue
