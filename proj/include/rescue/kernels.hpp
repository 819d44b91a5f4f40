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

// Data-parallel inner loops. Each kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::parallel with identical
// results; the unqualified entry points pick one by input size.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "rescue/model.hpp"
#include "rescue/predicate.hpp"

namespace rescue::kernels {

struct GeoSample {
    double lat = 0.0;
    double lon = 0.0;
    double value = 0.0;
};

struct CellStats {
    std::uint64_t count = 0;
    double sum = 0.0;
    double max = -std::numeric_limits<double>::infinity();

    double mean() const noexcept { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

/// Rows split latitude (row 0 at min_lat), columns split longitude.
struct GridSpec {
    BoundingBox box;
    int rows = 1;
    int cols = 1;
};

/// Row-major cell of a point. Cells are closed on the left/bottom; points on
/// the top/right bbox edge fall in the last row/column. nullopt outside.
std::optional<std::size_t> cell_index(const GridSpec& grid, double lat, double lon) noexcept;

namespace serial {
std::vector<std::uint32_t> match_indices(std::span<const SubscriptionPredicate> preds, const SensorEvent& event);
std::vector<CellStats> bin_samples(const GridSpec& grid, std::span<const GeoSample> samples);
/// samples.size() must be a multiple of the window length.
std::vector<ActivityEstimate> classify_windows(std::span<const Vec3> samples);
}  // namespace serial

namespace parallel {
std::vector<std::uint32_t> match_indices(std::span<const SubscriptionPredicate> preds, const SensorEvent& event);
std::vector<CellStats> bin_samples(const GridSpec& grid, std::span<const GeoSample> samples);
std::vector<ActivityEstimate> classify_windows(std::span<const Vec3> samples);
/// Threads OpenMP would use; 1 when built without it.
int max_threads() noexcept;
}  // namespace parallel

inline constexpr std::size_t kParallelMatchThreshold = 256;
inline constexpr std::size_t kParallelBinThreshold = 16384;

std::vector<std::uint32_t> match_indices(std::span<const SubscriptionPredicate> preds, const SensorEvent& event);
std::vector<CellStats> bin_samples(const GridSpec& grid, std::span<const GeoSample> samples);

}  // namespace rescue::kernels
