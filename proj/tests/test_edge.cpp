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
#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "rescue/edge.hpp"
#include "rescue/sim.hpp"

using namespace rescue;
using namespace rescue::edge;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<Vec3> vertical_wave(double amp, double hz, std::size_t n = kWindowSize, double phase = 0.3)
{
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRateHz;
        out.push_back({0.0, 0.0, 1.0 + amp * std::sin(kTwoPi * hz * t + phase)});
    }
    return out;
}

std::vector<Vec3> resting(std::size_t n, double noise = 0.0, std::uint64_t seed = 1)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, noise > 0 ? noise : 1.0);
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (noise > 0) {
            out.push_back({d(rng), d(rng), 1.0 + d(rng)});
        } else {
            out.push_back({0.0, 0.0, 1.0});
        }
    }
    return out;
}

// Two-pass population deviation of the magnitudes in long double.
double reference_sigma(const std::vector<Vec3>& s)
{
    long double mean = 0;
    for (const auto& v : s) {
        mean += std::sqrt(static_cast<long double>(v.x * v.x + v.y * v.y + v.z * v.z));
    }
    mean /= s.size();
    long double var = 0;
    for (const auto& v : s) {
        const long double d = std::sqrt(static_cast<long double>(v.x * v.x + v.y * v.y + v.z * v.z)) - mean;
        var += d * d;
    }
    return static_cast<double>(std::sqrt(var / s.size()));
}

}  // namespace

TEST_CASE("a motionless window is STILL with full confidence")
{
    const auto est = classify_activity(AccelWindow(resting(kWindowSize)));
    CHECK(est.state == ActivityState::Still);
    CHECK(est.confidence == 100);
}

TEST_CASE("window length is enforced")
{
    CHECK_THROWS(AccelWindow(resting(kWindowSize - 1)));
}

TEST_CASE("feature sigma matches a two-pass reference")
{
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const double amp = std::uniform_real_distribution<double>(0.0, 1.5)(rng);
        const double hz = std::uniform_real_distribution<double>(0.2, 4.0)(rng);
        auto w = vertical_wave(amp, hz);
        const auto f = extract_features(w);
        CHECK(f.sigma == doctest::Approx(reference_sigma(w)).epsilon(1e-9));
    }
}

TEST_CASE("periodicity recovers the frequency of a clean sinusoid")
{
    for (double hz = 1.0; hz <= 3.5; hz += 0.1) {
        std::vector<double> series;
        for (std::size_t i = 0; i < kWindowSize; ++i) {
            series.push_back(std::sin(kTwoPi * hz * static_cast<double>(i) / kSampleRateHz));
        }
        const auto p = estimate_periodicity(series);
        INFO("hz=" << hz);
        CHECK(p.dominant);
        // Lag quantization at 50 Hz bounds the error by f^2 / (2 * 50).
        CHECK(std::abs(p.frequency_hz - hz) <= hz * hz / 100.0 + 1e-9);
    }
}

TEST_CASE("a linear ramp is not mistaken for periodicity")
{
    std::vector<double> ramp;
    for (std::size_t i = 0; i < kWindowSize; ++i) {
        ramp.push_back(0.01 * static_cast<double>(i));
    }
    CHECK_FALSE(estimate_periodicity(ramp).dominant);
}

TEST_CASE("white noise rarely has a dominant peak")
{
    int dominant = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> d;
        std::vector<double> s(kWindowSize);
        for (auto& x : s) {
            x = d(rng);
        }
        dominant += estimate_periodicity(s).dominant;
    }
    CHECK(dominant <= 5);
}

TEST_CASE("synthetic gaits land in the expected classes")
{
    CHECK(classify_activity(AccelWindow(vertical_wave(0.3, 1.8))).state == ActivityState::Walking);
    CHECK(classify_activity(AccelWindow(vertical_wave(1.4, 2.8))).state == ActivityState::Running);
    CHECK(classify_activity(AccelWindow(vertical_wave(0.35, 3.0))).state == ActivityState::Running);
    CHECK(classify_activity(AccelWindow(resting(kWindowSize, 0.08, 9))).state == ActivityState::InVehicle);
    // Free fall: no gravity, no motion.
    std::vector<Vec3> weightless(kWindowSize, Vec3{0, 0, 0});
    CHECK(classify_activity(AccelWindow(weightless)).state == ActivityState::Unknown);
}

TEST_CASE("confidence falls as features approach a boundary")
{
    WindowFeatures f;
    f.mean_magnitude = 1.0;
    int last = 101;
    for (double sigma = 0.0; sigma < kStillMaxSigma; sigma += 0.002) {
        f.sigma = sigma;
        const auto est = classify_features(f);
        REQUIRE(est.state == ActivityState::Still);
        CHECK(est.confidence <= last);
        CHECK(est.confidence >= 0);
        last = est.confidence;
    }
    CHECK(last < 10);

    f.sigma = 0.4;
    f.periodicity = {1.8, 0.9, true};
    const int centre = classify_features(f).confidence;
    f.periodicity.frequency_hz = 2.35;
    const auto edge = classify_features(f);
    CHECK(edge.state == ActivityState::Walking);
    CHECK(edge.confidence < centre);
}

TEST_CASE("simulated traces agree with the generating state")
{
    const ActivityState states[] = {ActivityState::Still, ActivityState::Walking, ActivityState::Running,
                                    ActivityState::InVehicle};
    for (auto state : states) {
        int hits = 0;
        for (std::uint64_t seed = 1; seed <= 100; ++seed) {
            const auto trace = sim::accel_trace(state, 2.56, seed * 7919);
            REQUIRE(trace.size() == kWindowSize);
            hits += classify_activity(AccelWindow(trace)).state == state;
        }
        INFO(to_string(state));
        CHECK(hits >= 95);
    }
}

TEST_CASE("simulated walking is recognised with confidence of at least 70")
{
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const auto est = classify_activity(AccelWindow(sim::accel_trace(ActivityState::Walking, 2.56, seed)));
        CHECK(est.state == ActivityState::Walking);
        CHECK(est.confidence >= 70);
    }
}

TEST_CASE("impact followed by stillness raises one alert at impact time")
{
    auto history = resting(200);
    history.push_back({0, 0, 3.2});
    history.push_back({0, 0, 2.7});
    const auto tail = resting(600, 0.01, 5);
    history.insert(history.end(), tail.begin(), tail.end());
    const auto alerts = detect_falls(history, 1000);
    REQUIRE(alerts.size() == 1);
    CHECK(alerts[0].impact_time_ms == 1000 + 200 * kSamplePeriodMs);
    CHECK(alerts[0].peak_magnitude == doctest::Approx(3.2));
}

TEST_CASE("alert fires exactly when ten seconds of stillness complete")
{
    FallDetector det;
    det.push({0, 0, 3.0}, 0);
    std::optional<FallAlert> alert;
    std::int64_t fired_at = -1;
    for (int i = 1; i <= 600 && !alert; ++i) {
        alert = det.push({0, 0, 1.0}, i * kSamplePeriodMs);
        if (alert) {
            fired_at = i * kSamplePeriodMs;
        }
    }
    REQUIRE(alert.has_value());
    CHECK(fired_at == kImmobilityMs);
    CHECK_FALSE(det.pending());
}

TEST_CASE("impact followed by movement raises nothing")
{
    auto history = resting(100);
    history.push_back({0, 0, 3.0});
    const auto walk = vertical_wave(0.3, 1.8, 600);
    history.insert(history.end(), walk.begin(), walk.end());
    CHECK(detect_falls(history, 0).empty());
}

TEST_CASE("movement late in the immobility period cancels the alert")
{
    auto history = resting(10);
    history.push_back({0, 0, 3.0});
    const auto still = resting(420);
    history.insert(history.end(), still.begin(), still.end());
    const auto walk = vertical_wave(0.3, 1.8, 100);
    history.insert(history.end(), walk.begin(), walk.end());
    const auto rest = resting(600);
    history.insert(history.end(), rest.begin(), rest.end());
    CHECK(detect_falls(history, 0).empty());
}

TEST_CASE("sub-threshold bumps never alert")
{
    auto history = resting(1000);
    history[300] = {0, 0, 2.4};
    CHECK(detect_falls(history, 0).empty());
}

TEST_CASE("simulated falls raise exactly one alert")
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const double at = 1.0 + static_cast<double>(seed) * 0.1;
        const auto trace = sim::accel_trace(ActivityState::Walking, 15.0, seed, at);
        const auto alerts = detect_falls(trace, 0);
        REQUIRE(alerts.size() == 1);
        CHECK(alerts[0].impact_time_ms == std::llround(at * 1000.0 / kSamplePeriodMs) * kSamplePeriodMs);
        const auto clean = sim::accel_trace(ActivityState::Still, 15.0, seed);
        CHECK(detect_falls(clean, 0).empty());
    }
}

TEST_CASE("light labels")
{
    CHECK(interpret_light(0).label == LightLabel::Dark);
    CHECK(interpret_light(9.99).label == LightLabel::Dark);
    CHECK(interpret_light(10).label == LightLabel::Dim);
    CHECK(interpret_light(200).label == LightLabel::Indoor);
    CHECK(interpret_light(1000).label == LightLabel::Bright);
    CHECK(interpret_light(10000).label == LightLabel::DirectSun);
    CHECK(interpret_light(350).lux == 350);
    CHECK_THROWS_AS(interpret_light(-1), NegativeLux);
    CHECK_THROWS_AS(interpret_light(std::nan("")), NegativeLux);
}

TEST_CASE("activity descriptions")
{
    CHECK(describe_activity({ActivityState::Still, 100}) == "Still with a confidence level of 100");
    CHECK(describe_activity({ActivityState::InVehicle, 42}) == "In vehicle with a confidence level of 42");
}
