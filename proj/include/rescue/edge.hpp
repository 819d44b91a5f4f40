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

// Publisher-side processing: activity classification, fall detection and
// light-level interpretation.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "rescue/model.hpp"

namespace rescue::edge {

inline constexpr double kSampleRateHz = 50.0;
inline constexpr std::size_t kWindowSize = 128;  // 2.56 s at 50 Hz
inline constexpr std::int64_t kSamplePeriodMs = 20;

// Classifier decision boundaries.
inline constexpr double kStillMaxSigma = 0.05;
inline constexpr double kMovingMinSigma = 0.15;
inline constexpr double kRunningMinSigma = 0.8;
inline constexpr double kWalkMinHz = 1.2;
inline constexpr double kWalkMaxHz = 2.4;
inline constexpr double kGravityMin = 0.8;
inline constexpr double kGravityMax = 1.2;
/// Normalized autocorrelation a periodicity peak must reach to count as dominant.
inline constexpr double kPeakThreshold = 0.4;

// Distance over which the confidence margin ramps from 0 to 1, per feature.
inline constexpr double kSigmaRamp = 0.03;
inline constexpr double kFreqRamp = 0.3;
inline constexpr double kGravityRamp = 0.1;
inline constexpr double kPeakRamp = 0.2;

inline constexpr double kImpactThresholdG = 2.5;
inline constexpr std::int64_t kImmobilityMs = 10'000;

/// Window of exactly kWindowSize accelerometer samples in g.
class AccelWindow {
public:
    AccelWindow(std::vector<Vec3> samples, std::int64_t start_timestamp_ms = 0);

    std::span<const Vec3> samples() const noexcept { return samples_; }
    std::int64_t start_timestamp_ms() const noexcept { return start_ms_; }

private:
    std::vector<Vec3> samples_;
    std::int64_t start_ms_;
};

struct Periodicity {
    double frequency_hz = 0.0;  // 0 when there is no dominant peak
    double peak = 0.0;          // normalized autocorrelation at the chosen lag
    bool dominant = false;
};

/// Dominant frequency of a series by autocorrelation peak picking. The
/// series is mean-removed and linearly detrended first.
Periodicity estimate_periodicity(std::span<const double> series, double rate_hz = kSampleRateHz);

struct WindowFeatures {
    double mean_magnitude = 0.0;
    double sigma = 0.0;  // population standard deviation of the magnitude
    Periodicity periodicity;
};

WindowFeatures extract_features(std::span<const Vec3> samples);

ActivityEstimate classify_features(const WindowFeatures& f);
ActivityEstimate classify_activity(const AccelWindow& window);

struct FallAlert {
    std::int64_t impact_time_ms = 0;
    double peak_magnitude = 0.0;

    friend bool operator==(const FallAlert&, const FallAlert&) = default;
};

/// Streaming fall detector over a 50 Hz sample stream. An impact (a run of
/// samples at or above the threshold) raises an alert once the following
/// ten seconds classify STILL window by window.
class FallDetector {
public:
    std::optional<FallAlert> push(const Vec3& sample, std::int64_t timestamp_ms);
    bool pending() const noexcept { return impact_.has_value(); }

private:
    struct Impact {
        std::int64_t time_ms;
        double peak;
    };
    std::optional<Impact> impact_;
    bool in_spike_ = false;
    std::vector<Vec3> after_;
};

/// Every alert in a recorded history, sample i stamped start_ms + 20 i.
std::vector<FallAlert> detect_falls(std::span<const Vec3> history, std::int64_t start_ms);

/// First alert in a history, if any.
std::optional<FallAlert> detect_fall(std::span<const Vec3> history, std::int64_t start_ms);

enum class LightLabel : std::uint8_t { Dark, Dim, Indoor, Bright, DirectSun };

std::string_view to_string(LightLabel label) noexcept;

struct LightInterpretation {
    double lux = 0.0;
    LightLabel label = LightLabel::Dark;
};

class NegativeLux : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

LightInterpretation interpret_light(double lux);

/// "Still with a confidence level of 100".
std::string describe_activity(const ActivityEstimate& estimate);

}  // namespace rescue::edge
