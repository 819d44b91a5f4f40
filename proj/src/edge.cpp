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
#include "rescue/edge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace rescue::edge {

namespace {

double clamp01(double v)
{
    return std::clamp(v, 0.0, 1.0);
}

int to_confidence(double margin)
{
    return static_cast<int>(std::lround(100.0 * clamp01(margin)));
}

}  // namespace

AccelWindow::AccelWindow(std::vector<Vec3> samples, std::int64_t start_timestamp_ms)
    : samples_(std::move(samples))
    , start_ms_(start_timestamp_ms)
{
    if (samples_.size() != kWindowSize) {
        throw std::invalid_argument("an accelerometer window holds exactly 128 samples");
    }
    for (const auto& s : samples_) {
        if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.z)) {
            throw std::invalid_argument("accelerometer samples must be finite");
        }
    }
}

Periodicity estimate_periodicity(std::span<const double> series, double rate_hz)
{
    Periodicity result;
    const std::size_t n = series.size();
    if (n < 8) {
        return result;
    }

    // Least-squares line through (i, y_i); the residual carries the periodic part.
    const double nd = static_cast<double>(n);
    const double mean_i = (nd - 1.0) / 2.0;
    double mean_y = 0.0;
    for (double y : series) {
        mean_y += y;
    }
    mean_y /= nd;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double di = static_cast<double>(i) - mean_i;
        sxy += di * (series[i] - mean_y);
        sxx += di * di;
    }
    const double slope = sxy / sxx;

    std::vector<double> r(n);
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = series[i] - mean_y - slope * (static_cast<double>(i) - mean_i);
        energy += r[i] * r[i];
    }
    if (energy <= 1e-18 * nd) {
        return result;
    }

    // Lags between 5 Hz and half the window.
    const std::size_t min_lag = std::max<std::size_t>(2, static_cast<std::size_t>(rate_hz / 5.0));
    const std::size_t max_lag = n / 2;
    std::vector<double> ac(max_lag + 2, 0.0);
    for (std::size_t k = min_lag - 1; k <= max_lag + 1 && k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i + k < n; ++i) {
            s += r[i] * r[i + k];
        }
        ac[k] = s / energy;
    }

    std::size_t best = 0;
    for (std::size_t k = min_lag; k <= max_lag; ++k) {
        if (ac[k] > ac[k - 1] && ac[k] >= ac[k + 1] && (best == 0 || ac[k] > ac[best])) {
            best = k;
        }
    }
    if (best == 0) {
        return result;
    }
    result.peak = ac[best];
    result.dominant = result.peak >= kPeakThreshold;
    if (result.dominant) {
        const double a = ac[best - 1];
        const double b = ac[best];
        const double c = ac[best + 1];
        const double denom = a - 2.0 * b + c;
        const double delta = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
        result.frequency_hz = rate_hz / (static_cast<double>(best) + std::clamp(delta, -0.5, 0.5));
    }
    return result;
}

WindowFeatures extract_features(std::span<const Vec3> samples)
{
    WindowFeatures f;
    if (samples.empty()) {
        return f;
    }
    std::vector<double> mags(samples.size());
    std::transform(samples.begin(), samples.end(), mags.begin(), [](const Vec3& v) { return v.norm(); });
    double mean = 0.0;
    for (double m : mags) {
        mean += m;
    }
    mean /= static_cast<double>(mags.size());
    double var = 0.0;
    for (double m : mags) {
        var += (m - mean) * (m - mean);
    }
    f.mean_magnitude = mean;
    f.sigma = std::sqrt(var / static_cast<double>(mags.size()));
    f.periodicity = estimate_periodicity(mags);
    return f;
}

ActivityEstimate classify_features(const WindowFeatures& f)
{
    const double sigma = f.sigma;
    const auto& p = f.periodicity;

    if (sigma < kStillMaxSigma) {
        if (f.mean_magnitude < kGravityMin || f.mean_magnitude > kGravityMax) {
            return {ActivityState::Unknown, 0};
        }
        const double margin = std::min({(kStillMaxSigma - sigma) / kSigmaRamp,
                                        (f.mean_magnitude - kGravityMin) / kGravityRamp,
                                        (kGravityMax - f.mean_magnitude) / kGravityRamp});
        return {ActivityState::Still, to_confidence(margin)};
    }

    if (sigma >= kMovingMinSigma && sigma <= kRunningMinSigma && p.dominant && p.frequency_hz >= kWalkMinHz &&
        p.frequency_hz <= kWalkMaxHz) {
        const double margin = std::min({(sigma - kMovingMinSigma) / kSigmaRamp,
                                        (kRunningMinSigma - sigma) / kSigmaRamp,
                                        (p.frequency_hz - kWalkMinHz) / kFreqRamp,
                                        (kWalkMaxHz - p.frequency_hz) / kFreqRamp,
                                        (p.peak - kPeakThreshold) / kPeakRamp});
        return {ActivityState::Walking, to_confidence(margin)};
    }

    const bool vigorous = sigma > kRunningMinSigma;
    const bool fast_gait = p.dominant && p.frequency_hz > kWalkMaxHz && sigma >= kMovingMinSigma;
    if (vigorous || fast_gait) {
        double margin = 0.0;
        if (vigorous) {
            margin = (sigma - kRunningMinSigma) / kSigmaRamp;
        }
        if (fast_gait) {
            margin = std::max(margin, std::min({(p.frequency_hz - kWalkMaxHz) / kFreqRamp,
                                                (sigma - kMovingMinSigma) / kSigmaRamp,
                                                (p.peak - kPeakThreshold) / kPeakRamp}));
        }
        return {ActivityState::Running, to_confidence(margin)};
    }

    if (sigma > kStillMaxSigma && sigma < kMovingMinSigma && !p.dominant) {
        const double margin = std::min({(sigma - kStillMaxSigma) / kSigmaRamp, (kMovingMinSigma - sigma) / kSigmaRamp,
                                        (kPeakThreshold - p.peak) / kPeakRamp});
        return {ActivityState::InVehicle, to_confidence(margin)};
    }

    return {ActivityState::Unknown, 0};
}

ActivityEstimate classify_activity(const AccelWindow& window)
{
    return classify_features(extract_features(window.samples()));
}

std::optional<FallAlert> FallDetector::push(const Vec3& sample, std::int64_t timestamp_ms)
{
    const double m = sample.norm();
    if (m >= kImpactThresholdG) {
        if (in_spike_ && impact_) {
            impact_->peak = std::max(impact_->peak, m);
        } else {
            impact_ = Impact{timestamp_ms, m};
            after_.clear();
            in_spike_ = true;
        }
        return std::nullopt;
    }
    in_spike_ = false;
    if (!impact_) {
        return std::nullopt;
    }

    after_.push_back(sample);
    const std::size_t needed = static_cast<std::size_t>(kImmobilityMs / kSamplePeriodMs);
    const std::size_t size = after_.size();
    // Windows hop by half a window and the last one ends exactly at the
    // immobility horizon.
    if (size >= kWindowSize && ((size - kWindowSize) % (kWindowSize / 2) == 0 || size == needed)) {
        std::span<const Vec3> window(after_.data() + (size - kWindowSize), kWindowSize);
        if (classify_features(extract_features(window)).state != ActivityState::Still) {
            impact_.reset();
            after_.clear();
            return std::nullopt;
        }
    }
    if (size >= needed) {
        FallAlert alert{impact_->time_ms, impact_->peak};
        impact_.reset();
        after_.clear();
        return alert;
    }
    return std::nullopt;
}

std::vector<FallAlert> detect_falls(std::span<const Vec3> history, std::int64_t start_ms)
{
    FallDetector detector;
    std::vector<FallAlert> alerts;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (auto a = detector.push(history[i], start_ms + static_cast<std::int64_t>(i) * kSamplePeriodMs)) {
            alerts.push_back(*a);
        }
    }
    return alerts;
}

std::optional<FallAlert> detect_fall(std::span<const Vec3> history, std::int64_t start_ms)
{
    auto alerts = detect_falls(history, start_ms);
    if (alerts.empty()) {
        return std::nullopt;
    }
    return alerts.front();
}

std::string_view to_string(LightLabel label) noexcept
{
    switch (label) {
    case LightLabel::Dark:
        return "DARK";
    case LightLabel::Dim:
        return "DIM";
    case LightLabel::Indoor:
        return "INDOOR";
    case LightLabel::Bright:
        return "BRIGHT";
    case LightLabel::DirectSun:
        return "DIRECT_SUN";
    }
    return "DARK";
}

LightInterpretation interpret_light(double lux)
{
    if (!std::isfinite(lux) || lux < 0.0) {
        throw NegativeLux("lux must be finite and non-negative");
    }
    LightLabel label = LightLabel::DirectSun;
    if (lux < 10.0) {
        label = LightLabel::Dark;
    } else if (lux < 200.0) {
        label = LightLabel::Dim;
    } else if (lux < 1000.0) {
        label = LightLabel::Indoor;
    } else if (lux < 10000.0) {
        label = LightLabel::Bright;
    }
    return {lux, label};
}

std::string describe_activity(const ActivityEstimate& estimate)
{
    std::string name(to_string(estimate.state));
    for (std::size_t i = 0; i < name.size(); ++i) {
        if (name[i] == '_') {
            name[i] = ' ';
        } else if (i > 0) {
            name[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
        }
    }
    return name + " with a confidence level of " + std::to_string(estimate.confidence);
}

}  // namespace rescue::edge
