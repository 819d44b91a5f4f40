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
#include "rescue/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <numbers>
#include <set>
#include <thread>

#include "rescue/client.hpp"
#include "rescue/clock.hpp"
#include "rescue/edge.hpp"

namespace rescue::sim {

namespace {

using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

[[noreturn]] void invalid(const std::string& what)
{
    throw InvalidScenario(what);
}

const json& member(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object() || !obj.contains(key)) {
        invalid(where + "." + key + " is required");
    }
    return obj.at(key);
}

double number(const json& obj, const char* key, const std::string& where)
{
    const auto& v = member(obj, key, where);
    if (!v.is_number()) {
        invalid(where + "." + key + " must be a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
        invalid(where + "." + key + " must be finite");
    }
    return d;
}

int integer(const json& obj, const char* key, const std::string& where)
{
    const auto& v = member(obj, key, where);
    if (!v.is_number_integer()) {
        invalid(where + "." + key + " must be an integer");
    }
    return v.get<int>();
}

Cell parse_cell(const json& v, const std::string& where)
{
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
        invalid(where + " must be [x, y] integers");
    }
    return {v[0].get<int>(), v[1].get<int>()};
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where)
{
    for (const auto& [key, _] : obj.items()) {
        if (key.starts_with('_')) {
            continue;
        }
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            invalid(where + ": unknown field '" + key + "'");
        }
    }
}

json cell_json(Cell c)
{
    return json::array({c.x, c.y});
}

}  // namespace

bool in_grid(const DeckGrid& grid, Cell cell) noexcept
{
    return cell.x >= 0 && cell.y >= 0 && cell.x < grid.width && cell.y < grid.height;
}

void validate(const ScenarioSpec& spec)
{
    const auto& g = spec.deck_grid;
    if (g.width < 1 || g.height < 1) {
        invalid("deck_grid width and height must be at least 1");
    }
    if (!(g.cell_size_m > 0.0)) {
        invalid("deck_grid.cell_size_m must be > 0");
    }
    const auto& a = spec.geo_anchor;
    if (!(a.lat >= -90.0 && a.lat <= 90.0 && a.lon >= -180.0 && a.lon <= 180.0)) {
        invalid("geo_anchor out of range");
    }
    if (std::abs(a.lat) > 85.0) {
        invalid("geo_anchor latitude must be within +-85 degrees");
    }
    if (!(spec.ambient.light_lux >= 0.0)) {
        invalid("ambient.light_lux must be >= 0");
    }
    const auto& f = spec.fire;
    if (!in_grid(g, f.origin)) {
        invalid("fire.origin_cell outside the grid");
    }
    if (!(f.spread_speed_m_per_s > 0.0)) {
        invalid("fire.spread_speed_m_per_s must be > 0");
    }
    if (!(f.decay_length_m > 0.0)) {
        invalid("fire.decay_length_m must be > 0");
    }
    if (!(spec.duration_s > 0.0)) {
        invalid("duration_s must be > 0");
    }
    std::set<std::string> ids;
    for (const auto& agent : spec.agents) {
        if (!is_valid_client_id(agent.agent_id)) {
            invalid("agent_id '" + agent.agent_id + "' is not a valid installation code");
        }
        if (!ids.insert(agent.agent_id).second) {
            invalid("duplicate agent_id '" + agent.agent_id + "'");
        }
        if (agent.waypoints.empty()) {
            invalid(agent.agent_id + ": at least one waypoint is required");
        }
        for (std::size_t i = 0; i < agent.waypoints.size(); ++i) {
            if (!in_grid(g, agent.waypoints[i].cell)) {
                invalid(agent.agent_id + ": waypoint outside the grid");
            }
            if (i > 0 && !(agent.waypoints[i].time_s > agent.waypoints[i - 1].time_s)) {
                invalid(agent.agent_id + ": waypoint times must strictly increase");
            }
        }
        for (std::size_t i = 0; i < agent.activity_schedule.size(); ++i) {
            const auto& e = agent.activity_schedule[i];
            if (e.state == ActivityState::Unknown) {
                invalid(agent.agent_id + ": UNKNOWN is not a schedulable state");
            }
            if (i > 0 && !(e.start_s > agent.activity_schedule[i - 1].start_s)) {
                invalid(agent.agent_id + ": schedule start times must strictly increase");
            }
        }
    }
}

ScenarioSpec parse_scenario(const json& doc)
{
    if (!doc.is_object()) {
        invalid("scenario must be a JSON object");
    }
    reject_unknown(doc, {"deck_grid", "geo_anchor", "ambient", "fire", "agents", "duration_s", "seed"}, "scenario");
    ScenarioSpec s;
    try {
        const auto& g = member(doc, "deck_grid", "scenario");
        s.deck_grid = {integer(g, "width", "deck_grid"), integer(g, "height", "deck_grid"),
                       number(g, "cell_size_m", "deck_grid")};

        const auto& a = member(doc, "geo_anchor", "scenario");
        s.geo_anchor.lat = number(a, "lat", "geo_anchor");
        s.geo_anchor.lon = number(a, "lon", "geo_anchor");
        if (a.contains("bearing_deg")) {
            s.geo_anchor.bearing_deg = number(a, "bearing_deg", "geo_anchor");
        }

        const auto& amb = member(doc, "ambient", "scenario");
        s.ambient = {number(amb, "temp_c", "ambient"), number(amb, "humidity_pct", "ambient"),
                     number(amb, "pressure_hpa", "ambient"), number(amb, "light_lux", "ambient")};

        const auto& f = member(doc, "fire", "scenario");
        s.fire.origin = parse_cell(member(f, "origin_cell", "fire"), "fire.origin_cell");
        s.fire.start_time_s = number(f, "start_time_s", "fire");
        s.fire.spread_speed_m_per_s = number(f, "spread_speed_m_per_s", "fire");
        s.fire.peak_temp_c = number(f, "peak_temp_c", "fire");
        s.fire.decay_length_m = number(f, "decay_length_m", "fire");

        const auto& agents = member(doc, "agents", "scenario");
        if (!agents.is_array()) {
            invalid("agents must be an array");
        }
        for (const auto& aj : agents) {
            AgentSpec agent;
            const auto& id = member(aj, "agent_id", "agent");
            if (!id.is_string()) {
                invalid("agent.agent_id must be a string");
            }
            agent.agent_id = id.get<std::string>();
            const std::string where = "agent " + agent.agent_id;
            const auto& wps = member(aj, "waypoints", where);
            if (!wps.is_array()) {
                invalid(where + ": waypoints must be an array");
            }
            for (const auto& w : wps) {
                agent.waypoints.push_back({parse_cell(member(w, "cell", where), where + " waypoint cell"),
                                           number(w, "t_s", where + " waypoint")});
            }
            if (aj.contains("activity_schedule")) {
                const auto& sched = aj.at("activity_schedule");
                if (!sched.is_array()) {
                    invalid(where + ": activity_schedule must be an array");
                }
                for (const auto& e : sched) {
                    ScheduleEntry entry;
                    entry.start_s = number(e, "start_s", where + " schedule");
                    const auto& st = member(e, "state", where + " schedule");
                    auto state = st.is_string() ? parse_state(st.get<std::string>()) : std::nullopt;
                    if (!state) {
                        invalid(where + ": unknown activity state");
                    }
                    entry.state = *state;
                    if (e.contains("fall")) {
                        if (!e.at("fall").is_boolean()) {
                            invalid(where + ": fall must be a boolean");
                        }
                        entry.fall = e.at("fall").get<bool>();
                    }
                    agent.activity_schedule.push_back(entry);
                }
            }
            s.agents.push_back(std::move(agent));
        }

        s.duration_s = number(doc, "duration_s", "scenario");
        const auto& seed = member(doc, "seed", "scenario");
        if (!seed.is_number_integer()) {
            invalid("seed must be an integer");
        }
        s.seed = seed.get<std::uint64_t>();
    } catch (const json::exception& e) {
        invalid(e.what());
    }
    validate(s);
    return s;
}

ScenarioSpec load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        invalid("cannot open " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        invalid(path.string() + ": " + e.what());
    }
    return parse_scenario(doc);
}

nlohmann::ordered_json to_json(const ScenarioSpec& s)
{
    nlohmann::ordered_json out;
    out["deck_grid"] = {{"width", s.deck_grid.width},
                        {"height", s.deck_grid.height},
                        {"cell_size_m", s.deck_grid.cell_size_m}};
    out["geo_anchor"] = {{"lat", s.geo_anchor.lat}, {"lon", s.geo_anchor.lon}, {"bearing_deg", s.geo_anchor.bearing_deg}};
    out["ambient"] = {{"temp_c", s.ambient.temp_c},
                      {"humidity_pct", s.ambient.humidity_pct},
                      {"pressure_hpa", s.ambient.pressure_hpa},
                      {"light_lux", s.ambient.light_lux}};
    out["fire"] = {{"origin_cell", cell_json(s.fire.origin)},
                   {"start_time_s", s.fire.start_time_s},
                   {"spread_speed_m_per_s", s.fire.spread_speed_m_per_s},
                   {"peak_temp_c", s.fire.peak_temp_c},
                   {"decay_length_m", s.fire.decay_length_m}};
    auto agents = nlohmann::ordered_json::array();
    for (const auto& a : s.agents) {
        nlohmann::ordered_json aj;
        aj["agent_id"] = a.agent_id;
        auto wps = nlohmann::ordered_json::array();
        for (const auto& w : a.waypoints) {
            wps.push_back({{"cell", cell_json(w.cell)}, {"t_s", w.time_s}});
        }
        aj["waypoints"] = std::move(wps);
        auto sched = nlohmann::ordered_json::array();
        for (const auto& e : a.activity_schedule) {
            nlohmann::ordered_json ej{{"start_s", e.start_s}, {"state", to_string(e.state)}};
            if (e.fall) {
                ej["fall"] = true;
            }
            sched.push_back(std::move(ej));
        }
        aj["activity_schedule"] = std::move(sched);
        agents.push_back(std::move(aj));
    }
    out["agents"] = std::move(agents);
    out["duration_s"] = s.duration_s;
    out["seed"] = s.seed;
    return out;
}

double cell_distance_m(const DeckGrid& grid, Cell a, Cell b) noexcept
{
    return grid.cell_size_m * std::hypot(static_cast<double>(a.x - b.x), static_cast<double>(a.y - b.y));
}

double front_radius_m(const FireSpec& fire, double t_s) noexcept
{
    return fire.spread_speed_m_per_s * std::max(0.0, t_s - fire.start_time_s);
}

FieldSample field_at(const ScenarioSpec& spec, Cell cell, double t_s)
{
    if (!in_grid(spec.deck_grid, cell)) {
        throw CellOutOfGrid("cell (" + std::to_string(cell.x) + "," + std::to_string(cell.y) + ") outside the grid");
    }
    const auto& amb = spec.ambient;
    const auto& fire = spec.fire;
    FieldSample out{amb.temp_c, amb.light_lux, amb.humidity_pct, amb.pressure_hpa};
    if (t_s < fire.start_time_s) {
        return out;
    }
    const double d = cell_distance_m(spec.deck_grid, cell, fire.origin);
    const double r = front_radius_m(fire, t_s);
    if (d <= r) {
        out.temp_c = amb.temp_c + (fire.peak_temp_c - amb.temp_c) * std::exp(-d / fire.decay_length_m);
    }
    const double smoke = 2.0 * std::max(0.0, 1.0 - d / (r + kFrontEpsilon));
    out.light_lux = amb.light_lux * std::exp(-smoke);
    return out;
}

GeoPosition local_to_geo(const ScenarioSpec& spec, double x_m, double y_m)
{
    const double b = spec.geo_anchor.bearing_deg * kDeg;
    const double east = x_m * std::sin(b) - y_m * std::cos(b);
    const double north = x_m * std::cos(b) + y_m * std::sin(b);
    const double lat0 = spec.geo_anchor.lat;
    GeoPosition p;
    p.lat = lat0 + north / kEarthRadiusM / kDeg;
    p.lon = spec.geo_anchor.lon + east / (kEarthRadiusM * std::cos(lat0 * kDeg)) / kDeg;
    p.accuracy_m = kGpsAccuracyM;
    return p;
}

GeoPosition cell_to_geo(const ScenarioSpec& spec, Cell cell)
{
    const double cs = spec.deck_grid.cell_size_m;
    return local_to_geo(spec, cell.x * cs, cell.y * cs);
}

std::optional<Cell> geo_to_cell(const ScenarioSpec& spec, const GeoPosition& pos)
{
    const double lat0 = spec.geo_anchor.lat;
    const double north = (pos.lat - lat0) * kDeg * kEarthRadiusM;
    const double east = (pos.lon - spec.geo_anchor.lon) * kDeg * kEarthRadiusM * std::cos(lat0 * kDeg);
    const double b = spec.geo_anchor.bearing_deg * kDeg;
    const double x_m = east * std::sin(b) + north * std::cos(b);
    const double y_m = -east * std::cos(b) + north * std::sin(b);
    const double cs = spec.deck_grid.cell_size_m;
    const Cell c{static_cast<int>(std::lround(x_m / cs)), static_cast<int>(std::lround(y_m / cs))};
    if (!in_grid(spec.deck_grid, c)) {
        return std::nullopt;
    }
    return c;
}

AgentKinematics agent_at(const ScenarioSpec& spec, const AgentSpec& agent, double t_s)
{
    const double cs = spec.deck_grid.cell_size_m;
    const auto& wps = agent.waypoints;
    AgentKinematics k;
    auto place = [&](double x, double y) {
        k.x_m = x;
        k.y_m = y;
        k.cell = {static_cast<int>(std::lround(x / cs)), static_cast<int>(std::lround(y / cs))};
        k.cell.x = std::clamp(k.cell.x, 0, spec.deck_grid.width - 1);
        k.cell.y = std::clamp(k.cell.y, 0, spec.deck_grid.height - 1);
    };
    if (wps.empty()) {
        place(0.0, 0.0);
        return k;
    }
    if (t_s <= wps.front().time_s) {
        place(wps.front().cell.x * cs, wps.front().cell.y * cs);
        return k;
    }
    if (t_s >= wps.back().time_s) {
        place(wps.back().cell.x * cs, wps.back().cell.y * cs);
        return k;
    }
    const auto it = std::upper_bound(wps.begin(), wps.end(), t_s,
                                     [](double t, const Waypoint& w) { return t < w.time_s; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double span = b.time_s - a.time_s;
    const double u = (t_s - a.time_s) / span;
    const double ax = a.cell.x * cs, ay = a.cell.y * cs;
    const double bx = b.cell.x * cs, by = b.cell.y * cs;
    place(ax + u * (bx - ax), ay + u * (by - ay));
    k.speed_m_per_s = std::hypot(bx - ax, by - ay) / span;
    return k;
}

ActivityState scheduled_state(const AgentSpec& agent, double t_s) noexcept
{
    ActivityState state = ActivityState::Still;
    for (const auto& e : agent.activity_schedule) {
        if (e.start_s <= t_s) {
            state = e.state;
        } else {
            break;
        }
    }
    return state;
}

AccelGenerator::AccelGenerator(std::uint64_t seed) : rng_(seed) {}

Vec3 AccelGenerator::sample(ActivityState state, double t_s)
{
    const double two_pi_t = 2.0 * std::numbers::pi * t_s;
    switch (state) {
    case ActivityState::Still:
        return {noise(0.01), noise(0.01), 1.0 + noise(0.01)};
    case ActivityState::Walking:
        return {noise(0.05), noise(0.05), 1.0 + 0.3 * std::sin(1.8 * two_pi_t) + noise(0.05)};
    case ActivityState::Running:
        return {noise(0.1), noise(0.1), 1.0 + 0.9 * std::sin(2.8 * two_pi_t) + noise(0.1)};
    case ActivityState::InVehicle:
        return {noise(0.08), noise(0.08), 1.0 + 0.03 * std::sin(0.2 * two_pi_t) + noise(0.08)};
    case ActivityState::Unknown:
        break;
    }
    return {noise(0.3), noise(0.3), noise(0.3)};
}

std::vector<Vec3> accel_trace(ActivityState state, double duration_s, std::uint64_t seed,
                              std::optional<double> fall_at_s)
{
    const auto n = static_cast<std::size_t>(std::llround(duration_s * edge::kSampleRateHz));
    const std::size_t fall_index = fall_at_s
        ? static_cast<std::size_t>(std::llround(*fall_at_s * edge::kSampleRateHz))
        : std::numeric_limits<std::size_t>::max();
    AccelGenerator gen(seed);
    std::vector<Vec3> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / edge::kSampleRateHz;
        if (i >= fall_index) {
            if (i - fall_index < kFallSpikeSamples) {
                out.push_back(AccelGenerator::impact(kFallSpikeG));
            } else {
                out.push_back(gen.sample(ActivityState::Still, t));
            }
        } else {
            out.push_back(gen.sample(state, t));
        }
    }
    return out;
}

std::uint64_t agent_seed(std::uint64_t scenario_seed, std::size_t agent_index) noexcept
{
    // splitmix64 of the pair keeps agent streams independent.
    std::uint64_t z = scenario_seed + 0x9E3779B97F4A7C15ULL * (agent_index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<Reading> agent_readings(const ScenarioSpec& spec, std::size_t index)
{
    const AgentSpec& agent = spec.agents.at(index);
    const auto total = static_cast<std::size_t>(std::llround(spec.duration_s * edge::kSampleRateHz));

    // Sample indices where an impact starts.
    std::vector<std::size_t> falls;
    for (const auto& e : agent.activity_schedule) {
        if (e.fall) {
            falls.push_back(static_cast<std::size_t>(std::llround(e.start_s * edge::kSampleRateHz)));
        }
    }

    AccelGenerator gen(agent_seed(spec.seed, index));
    edge::FallDetector detector;
    std::vector<Vec3> window;
    window.reserve(edge::kWindowSize);
    std::optional<ActivityEstimate> latest;
    std::vector<Reading> out;

    for (std::size_t i = 0; i < total; ++i) {
        const std::int64_t offset_ms = static_cast<std::int64_t>(i) * edge::kSamplePeriodMs;
        const double t = static_cast<double>(offset_ms) / 1000.0;

        if (offset_ms % kPublishPeriodMs == 0) {
            const auto kin = agent_at(spec, agent, t);
            const auto field = field_at(spec, kin.cell, t);
            const auto pos = cell_to_geo(spec, kin.cell);
            out.push_back({offset_ms, SensorKind::Thermometer, field.temp_c, pos, std::nullopt, std::nullopt});
            out.push_back({offset_ms, SensorKind::Humidity, field.humidity_pct, pos, std::nullopt, std::nullopt});
            out.push_back({offset_ms, SensorKind::Barometer, field.pressure_hpa, pos, std::nullopt, std::nullopt});
            out.push_back({offset_ms, SensorKind::Light, field.light_lux, pos, std::nullopt, std::nullopt});
            out.push_back({offset_ms, SensorKind::Gps, kin.speed_m_per_s, pos, latest, std::nullopt});
        }

        const bool spiking = std::any_of(falls.begin(), falls.end(), [&](std::size_t f) {
            return i >= f && i < f + kFallSpikeSamples;
        });
        const Vec3 s = spiking ? AccelGenerator::impact(kFallSpikeG) : gen.sample(scheduled_state(agent, t), t);

        if (auto alert = detector.push(s, offset_ms)) {
            const auto kin = agent_at(spec, agent, t);
            out.push_back({alert->impact_time_ms, SensorKind::Accelerometer, Vec3{0.0, 0.0, alert->peak_magnitude},
                           cell_to_geo(spec, kin.cell), ActivityEstimate{ActivityState::Still, 100},
                           AlertMarker::Fall});
        }

        window.push_back(s);
        if (window.size() == edge::kWindowSize) {
            Vec3 mean;
            for (const auto& v : window) {
                mean.x += v.x;
                mean.y += v.y;
                mean.z += v.z;
            }
            const double n = static_cast<double>(window.size());
            mean = {mean.x / n, mean.y / n, mean.z / n};
            latest = edge::classify_activity(edge::AccelWindow(window));
            const auto kin = agent_at(spec, agent, t);
            out.push_back({offset_ms, SensorKind::Accelerometer, mean, cell_to_geo(spec, kin.cell), latest,
                           std::nullopt});
            window.clear();
        }
    }
    return out;
}

std::uint64_t AgentReport::total() const noexcept
{
    std::uint64_t n = 0;
    for (const auto& [_, c] : published) {
        n += c;
    }
    return n;
}

std::map<SensorKind, std::uint64_t> RunReport::per_kind() const
{
    std::map<SensorKind, std::uint64_t> out;
    for (const auto& a : agents) {
        for (const auto& [k, c] : a.published) {
            out[k] += c;
        }
    }
    return out;
}

std::uint64_t RunReport::total() const noexcept
{
    std::uint64_t n = 0;
    for (const auto& a : agents) {
        n += a.total();
    }
    return n;
}

std::size_t RunReport::errors() const noexcept
{
    return static_cast<std::size_t>(
        std::count_if(agents.begin(), agents.end(), [](const AgentReport& a) { return a.error.has_value(); }));
}

nlohmann::ordered_json RunReport::to_json() const
{
    nlohmann::ordered_json out;
    out["epoch_ms"] = epoch_ms;
    out["total"] = total();
    out["errors"] = errors();
    nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
    for (const auto& [k, c] : per_kind()) {
        kinds[std::string(rescue::to_string(k))] = c;
    }
    out["per_kind"] = std::move(kinds);
    auto list = nlohmann::ordered_json::array();
    for (const auto& a : agents) {
        nlohmann::ordered_json aj;
        aj["agent_id"] = a.agent_id;
        nlohmann::ordered_json pk = nlohmann::ordered_json::object();
        for (const auto& [k, c] : a.published) {
            pk[std::string(rescue::to_string(k))] = c;
        }
        aj["published"] = std::move(pk);
        aj["fall_alerts"] = a.fall_alerts;
        if (a.error) {
            aj["error"] = *a.error;
        }
        list.push_back(std::move(aj));
    }
    out["agents"] = std::move(list);
    return out;
}

RunReport run_scenario(const ScenarioSpec& input, const RunOptions& options)
{
    ScenarioSpec spec = input;
    if (options.seed_override) {
        spec.seed = *options.seed_override;
    }
    validate(spec);
    const double speed = options.speed > 0.0 ? options.speed : 1.0;

    // Connect every agent first so that a dead broker fails fast.
    std::vector<std::unique_ptr<client::Client>> clients(spec.agents.size());
    RunReport report;
    report.agents.resize(spec.agents.size());
    std::size_t connected = 0;
    std::string first_error;
    for (std::size_t i = 0; i < spec.agents.size(); ++i) {
        report.agents[i].agent_id = spec.agents[i].agent_id;
        client::ClientConfig cfg;
        cfg.broker = options.broker;
        cfg.role = proto::Role::Publisher;
        cfg.client_id = spec.agents[i].agent_id;
        try {
            clients[i] = client::Client::connect(cfg);
            ++connected;
        } catch (const client::ClientError& e) {
            report.agents[i].error = e.what();
            if (first_error.empty()) {
                first_error = e.what();
            }
        }
    }
    if (!spec.agents.empty() && connected == 0) {
        throw BrokerUnreachable(first_error);
    }

    report.epoch_ms = options.virtual_clock ? kVirtualEpochMs : wall_now_ms();
    const auto wall_start = std::chrono::steady_clock::now();

    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < spec.agents.size(); ++i) {
        if (!clients[i]) {
            continue;
        }
        threads.emplace_back([&, i] {
            auto& c = *clients[i];
            auto& ar = report.agents[i];
            try {
                for (const auto& r : agent_readings(spec, i)) {
                    if (!options.virtual_clock) {
                        const auto due = wall_start + std::chrono::microseconds(
                                                          static_cast<std::int64_t>(r.offset_ms * 1000.0 / speed));
                        std::this_thread::sleep_until(due);
                    }
                    auto e = c.make_event(r.kind, r.value, r.position, report.epoch_ms + r.offset_ms, r.activity);
                    e.alert = r.alert;
                    c.publish(e);
                    ++ar.published[r.kind];
                    if (r.alert) {
                        ++ar.fall_alerts;
                    }
                }
                // Stay connected until the scenario clock runs out.
                if (!options.virtual_clock) {
                    std::this_thread::sleep_until(
                        wall_start + std::chrono::microseconds(static_cast<std::int64_t>(spec.duration_s * 1e6 / speed)));
                }
            } catch (const std::exception& e) {
                ar.error = e.what();
            }
            c.close();
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    return report;
}

}  // namespace rescue::sim
