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

// Ship-fire scenario simulator: scalar fields over a deck grid, moving
// agents, synthetic accelerometer streams and a runner that publishes
// each agent's readings through its own client.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rescue/model.hpp"
#include "rescue/net.hpp"

namespace rescue::sim {

inline constexpr double kEarthRadiusM = 6'371'008.8;
inline constexpr double kFrontEpsilon = 1e-6;
inline constexpr std::int64_t kPublishPeriodMs = 2000;
inline constexpr double kGpsAccuracyM = 5.0;
/// Epoch base for virtual-clock runs (2023-11-14T22:13:20Z).
inline constexpr std::int64_t kVirtualEpochMs = 1'700'000'000'000;

struct Cell {
    int x = 0;
    int y = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

struct DeckGrid {
    int width = 1;
    int height = 1;
    double cell_size_m = 1.0;
};

/// Cell (0,0)'s center, and the compass bearing (degrees clockwise from
/// north) of the grid's +x axis. +y lies 90 degrees counter-clockwise of +x.
struct GeoAnchor {
    double lat = 0.0;
    double lon = 0.0;
    double bearing_deg = 90.0;
};

struct Ambient {
    double temp_c = 20.0;
    double humidity_pct = 50.0;
    double pressure_hpa = 1013.25;
    double light_lux = 300.0;
};

struct FireSpec {
    Cell origin;
    double start_time_s = 0.0;
    double spread_speed_m_per_s = 1.0;
    double peak_temp_c = 400.0;
    double decay_length_m = 10.0;
};

struct Waypoint {
    Cell cell;
    double time_s = 0.0;
};

struct ScheduleEntry {
    double start_s = 0.0;
    ActivityState state = ActivityState::Still;
    bool fall = false;  // inject an impact at start_s
};

struct AgentSpec {
    std::string agent_id;
    std::vector<Waypoint> waypoints;
    std::vector<ScheduleEntry> activity_schedule;
};

struct ScenarioSpec {
    DeckGrid deck_grid;
    GeoAnchor geo_anchor;
    Ambient ambient;
    FireSpec fire;
    std::vector<AgentSpec> agents;
    double duration_s = 60.0;
    std::uint64_t seed = 0;
};

class InvalidScenario : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CellOutOfGrid : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class BrokerUnreachable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws InvalidScenario naming the first violated rule.
void validate(const ScenarioSpec& spec);
ScenarioSpec parse_scenario(const nlohmann::json& doc);
ScenarioSpec load_scenario(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ScenarioSpec& spec);

struct FieldSample {
    double temp_c = 0.0;
    double light_lux = 0.0;
    double humidity_pct = 0.0;
    double pressure_hpa = 0.0;
};

bool in_grid(const DeckGrid& grid, Cell cell) noexcept;
/// Distance in metres between two cell centers.
double cell_distance_m(const DeckGrid& grid, Cell a, Cell b) noexcept;
double front_radius_m(const FireSpec& fire, double t_s) noexcept;
FieldSample field_at(const ScenarioSpec& spec, Cell cell, double t_s);

/// Local grid metres (x along +x, y along +y, origin at cell (0,0)'s center).
GeoPosition local_to_geo(const ScenarioSpec& spec, double x_m, double y_m);
GeoPosition cell_to_geo(const ScenarioSpec& spec, Cell cell);
/// Nearest cell; nullopt when that cell is outside the grid.
std::optional<Cell> geo_to_cell(const ScenarioSpec& spec, const GeoPosition& pos);

struct AgentKinematics {
    double x_m = 0.0;
    double y_m = 0.0;
    double speed_m_per_s = 0.0;
    Cell cell;
};

/// Linear interpolation between waypoints, held at the ends.
AgentKinematics agent_at(const ScenarioSpec& spec, const AgentSpec& agent, double t_s);

/// Last schedule entry starting at or before t; STILL before the first.
ActivityState scheduled_state(const AgentSpec& agent, double t_s) noexcept;

/// Deterministic 50 Hz accelerometer sample source.
class AccelGenerator {
public:
    explicit AccelGenerator(std::uint64_t seed);

    /// Sample for `state` at time t (seconds); phase follows absolute time.
    Vec3 sample(ActivityState state, double t_s);
    /// One impact sample of the given magnitude.
    static Vec3 impact(double magnitude_g) noexcept { return {0.0, 0.0, magnitude_g}; }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> unit_{0.0, 1.0};

    double noise(double sigma) { return sigma * unit_(rng_); }
};

inline constexpr double kFallSpikeG = 3.0;
inline constexpr int kFallSpikeSamples = 2;

/// Samples at 50 Hz for `duration_s`. With `fall_at_s`, a 2-sample 3 g spike
/// is injected there and every later sample is STILL.
std::vector<Vec3> accel_trace(ActivityState state, double duration_s, std::uint64_t seed,
                              std::optional<double> fall_at_s = std::nullopt);

/// One publishable reading of an agent, relative to the run start.
struct Reading {
    std::int64_t offset_ms = 0;
    SensorKind kind = SensorKind::Thermometer;
    SensorValue value = 0.0;
    GeoPosition position;
    std::optional<ActivityEstimate> activity;
    std::optional<AlertMarker> alert;
};

/// Per-agent seed derived from the scenario seed and the agent's index.
std::uint64_t agent_seed(std::uint64_t scenario_seed, std::size_t agent_index) noexcept;

/// Everything agent `index` publishes over the run, in publication order.
std::vector<Reading> agent_readings(const ScenarioSpec& spec, std::size_t index);

struct RunOptions {
    net::Endpoint broker;
    bool virtual_clock = false;
    /// Wall-clock speed-up; ignored with the virtual clock.
    double speed = 1.0;
    std::optional<std::uint64_t> seed_override;
};

struct AgentReport {
    std::string agent_id;
    std::map<SensorKind, std::uint64_t> published;
    std::uint64_t fall_alerts = 0;
    std::optional<std::string> error;

    std::uint64_t total() const noexcept;
};

struct RunReport {
    std::vector<AgentReport> agents;
    std::int64_t epoch_ms = 0;

    std::map<SensorKind, std::uint64_t> per_kind() const;
    std::uint64_t total() const noexcept;
    std::size_t errors() const noexcept;
    nlohmann::ordered_json to_json() const;
};

/// Connects one publisher per agent and publishes every reading. Throws
/// BrokerUnreachable when no agent can connect.
RunReport run_scenario(const ScenarioSpec& spec, const RunOptions& options);

}  // namespace rescue::sim
