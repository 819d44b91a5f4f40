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

// Generators and independent oracles shared by the unit and acceptance
// tests. The oracles work on predicate *text* and raw JSON so that they
// share no code with the engine under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rescue/model.hpp"

namespace rescue::testing {

inline const char* const kKindNames[] = {"ACCELEROMETER", "BAROMETER", "THERMOMETER", "HUMIDITY", "LIGHT", "GPS"};
inline const char* const kStateNames[] = {"STILL", "WALKING", "RUNNING", "IN_VEHICLE", "UNKNOWN"};
inline const char* const kUnits[] = {"g", "hpa", "celsius", "percent_rh", "lux", "degrees"};

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::uint64_t next() { return rng_(); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return real(0.0, 1.0) < p; }

    template <typename T, std::size_t N>
    const T& pick(const T (&items)[N])
    {
        return items[static_cast<std::size_t>(integer(0, static_cast<int>(N) - 1))];
    }

    /// Values on a coarse grid so that equality comparisons hit sometimes.
    double coarse(double lo, double hi, double step)
    {
        const int steps = static_cast<int>((hi - lo) / step);
        return lo + step * integer(0, steps);
    }

    SensorEvent event(const std::vector<std::string>& publishers, std::int64_t seq)
    {
        SensorEvent e;
        e.publisher_id = publishers[static_cast<std::size_t>(integer(0, static_cast<int>(publishers.size()) - 1))];
        e.seq = seq;
        e.event_id = e.publisher_id + ":gen:" + std::to_string(seq);
        e.timestamp_ms = 1'700'000'000'000 + integer(0, 3'600'000);
        const int k = integer(0, 5);
        e.kind = static_cast<SensorKind>(k);
        e.unit = kUnits[k];
        if (e.kind == SensorKind::Accelerometer) {
            e.value = Vec3{coarse(-2, 2, 0.5), coarse(-2, 2, 0.5), coarse(-2, 2, 0.5)};
        } else {
            e.value = coarse(-50, 150, 5);
        }
        e.position = {coarse(-2, 2, 0.25), coarse(-2, 2, 0.25), 5.0};
        if (coin(0.6)) {
            e.activity = ActivityEstimate{static_cast<ActivityState>(integer(0, 4)), integer(0, 10) * 10};
        }
        return e;
    }

    /// Random predicate text in the subscription grammar (0..4 clauses).
    std::string predicate(const std::vector<std::string>& publishers)
    {
        const int clauses = integer(0, 4);
        std::string out;
        static const char* const ops[] = {"<", "<=", "=", "!=", ">=", ">"};
        for (int i = 0; i < clauses; ++i) {
            if (!out.empty()) {
                out += coin() ? " and " : " AND ";
            }
            switch (integer(0, 5)) {
            case 0: {
                out += "kind=";
                const int n = integer(1, 3);
                for (int j = 0; j < n; ++j) {
                    out += (j ? "," : "");
                    std::string name = pick(kKindNames);
                    if (coin(0.2)) {
                        std::transform(name.begin(), name.end(), name.begin(), ::tolower);
                    }
                    out += name;
                }
                break;
            }
            case 1: {
                std::ostringstream os;
                os << "value" << (coin() ? " " : "") << pick(ops) << (coin() ? " " : "") << coarse(-50, 150, 5);
                out += os.str();
                break;
            }
            case 2:
                out += "publisher=\"" +
                       publishers[static_cast<std::size_t>(integer(0, static_cast<int>(publishers.size()) - 1))] +
                       "\"";
                break;
            case 3: {
                const double lat0 = coarse(-2, 1.5, 0.25), lon0 = coarse(-2, 1.5, 0.25);
                std::ostringstream os;
                os << "geo in [" << lat0 << "," << lon0 << "," << lat0 + coarse(0, 2, 0.25) << ","
                   << lon0 + coarse(0, 2, 0.25) << "]";
                out += os.str();
                break;
            }
            case 4: {
                out += "activity=";
                const int n = integer(1, 2);
                for (int j = 0; j < n; ++j) {
                    out += (j ? "," : "");
                    out += pick(kStateNames);
                }
                break;
            }
            default:
                out += "confidence>=" + std::to_string(integer(0, 10) * 10);
                break;
            }
        }
        return out;
    }

private:
    std::mt19937_64 rng_;
};

/// Naive reference evaluator: splits the text on "and", interprets each
/// clause with string operations and checks it against the event's JSON.
class NaiveMatcher {
public:
    static bool matches(const std::string& predicate, const std::string& canonical_event)
    {
        const auto e = nlohmann::json::parse(canonical_event);
        for (const auto& raw : split_and(predicate)) {
            const auto clause = trim(raw);
            if (clause.empty()) {
                continue;
            }
            if (!clause_holds(clause, e)) {
                return false;
            }
        }
        return true;
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(' ');
        if (b == std::string::npos) {
            return {};
        }
        return s.substr(b, s.find_last_not_of(' ') - b + 1);
    }

    static std::string upper(std::string s)
    {
        std::transform(s.begin(), s.end(), s.begin(), ::toupper);
        return s;
    }

    static std::vector<std::string> split_and(const std::string& text)
    {
        std::vector<std::string> parts;
        const std::string up = upper(text);
        std::size_t start = 0;
        while (true) {
            const auto at = up.find(" AND ", start);
            if (at == std::string::npos) {
                parts.push_back(text.substr(start));
                return parts;
            }
            parts.push_back(text.substr(start, at - start));
            start = at + 5;
        }
    }

    static std::vector<std::string> split_comma(const std::string& s)
    {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(trim(item));
        }
        return out;
    }

    static double scalar(const nlohmann::json& e)
    {
        const auto& v = e.at("value");
        if (v.is_array()) {
            const double x = v[0], y = v[1], z = v[2];
            return std::sqrt(x * x + y * y + z * z);
        }
        return v.get<double>();
    }

    static bool clause_holds(const std::string& clause, const nlohmann::json& e)
    {
        const std::string up = upper(clause);
        if (up.rfind("KIND=", 0) == 0) {
            for (const auto& k : split_comma(up.substr(5))) {
                if (k == e.at("kind").get<std::string>()) {
                    return true;
                }
            }
            return false;
        }
        if (up.rfind("PUBLISHER=", 0) == 0) {
            auto id = clause.substr(10);
            if (!id.empty() && id.front() == '"') {
                id = id.substr(1, id.size() - 2);
            }
            return id == e.at("publisher_id").get<std::string>();
        }
        if (up.rfind("GEO IN [", 0) == 0) {
            const auto nums = split_comma(clause.substr(8, clause.size() - 9));
            const double lat = e.at("position").at("lat"), lon = e.at("position").at("lon");
            return lat >= std::stod(nums[0]) && lon >= std::stod(nums[1]) && lat <= std::stod(nums[2]) &&
                   lon <= std::stod(nums[3]);
        }
        if (up.rfind("ACTIVITY=", 0) == 0) {
            if (!e.contains("activity")) {
                return false;
            }
            for (const auto& s : split_comma(up.substr(9))) {
                if (s == e.at("activity").at("state").get<std::string>()) {
                    return true;
                }
            }
            return false;
        }
        if (up.rfind("CONFIDENCE>=", 0) == 0) {
            if (!e.contains("activity")) {
                return false;
            }
            return e.at("activity").at("confidence").get<int>() >= std::stoi(clause.substr(12));
        }
        if (up.rfind("VALUE", 0) == 0) {
            std::string rest = trim(clause.substr(5));
            std::string op;
            for (const char* cand : {"<=", ">=", "!=", "<", ">", "="}) {
                if (rest.rfind(cand, 0) == 0) {
                    op = cand;
                    break;
                }
            }
            const double rhs = std::stod(trim(rest.substr(op.size())));
            const double v = scalar(e);
            if (op == "<") return v < rhs;
            if (op == "<=") return v <= rhs;
            if (op == "=") return v == rhs;
            if (op == "!=") return v != rhs;
            if (op == ">=") return v >= rhs;
            return v > rhs;
        }
        throw std::runtime_error("oracle cannot read clause: " + clause);
    }
};

/// Polls `pred` until it holds or `timeout` passes.
template <typename Pred>
bool eventually(Pred pred, std::chrono::milliseconds timeout = std::chrono::milliseconds(3000))
{
    const auto until = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < until) {
        if (pred()) {
            return true;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return pred();
}

/// A fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    TempDir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("rescue-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace rescue::testing
