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
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rescue/edge.hpp"
#include "rescue/kernels.hpp"

namespace rescue::kernels {

std::optional<std::size_t> cell_index(const GridSpec& grid, double lat, double lon) noexcept
{
    if (!grid.box.contains(lat, lon)) {
        return std::nullopt;
    }
    const double height = grid.box.max_lat - grid.box.min_lat;
    const double width = grid.box.max_lon - grid.box.min_lon;
    auto bucket = [](double offset, double extent, int n) {
        if (extent <= 0.0) {
            return 0;
        }
        const auto i = static_cast<int>(std::floor(offset / extent * n));
        return std::clamp(i, 0, n - 1);
    };
    const int row = bucket(lat - grid.box.min_lat, height, grid.rows);
    const int col = bucket(lon - grid.box.min_lon, width, grid.cols);
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(grid.cols) + static_cast<std::size_t>(col);
}

namespace serial {

std::vector<std::uint32_t> match_indices(std::span<const SubscriptionPredicate> preds, const SensorEvent& event)
{
    std::vector<std::uint32_t> hits;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (matches(preds[i], event)) {
            hits.push_back(static_cast<std::uint32_t>(i));
        }
    }
    return hits;
}

std::vector<CellStats> bin_samples(const GridSpec& grid, std::span<const GeoSample> samples)
{
    std::vector<CellStats> cells(static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols));
    for (const auto& s : samples) {
        if (auto idx = cell_index(grid, s.lat, s.lon)) {
            auto& c = cells[*idx];
            ++c.count;
            c.sum += s.value;
            c.max = std::max(c.max, s.value);
        }
    }
    return cells;
}

std::vector<ActivityEstimate> classify_windows(std::span<const Vec3> samples)
{
    if (samples.size() % edge::kWindowSize != 0) {
        throw std::invalid_argument("sample count must be a whole number of windows");
    }
    const std::size_t n = samples.size() / edge::kWindowSize;
    std::vector<ActivityEstimate> out(n);
    for (std::size_t w = 0; w < n; ++w) {
        out[w] = edge::classify_features(edge::extract_features(samples.subspan(w * edge::kWindowSize, edge::kWindowSize)));
    }
    return out;
}

}  // namespace serial

std::vector<std::uint32_t> match_indices(std::span<const SubscriptionPredicate> preds, const SensorEvent& event)
{
    return preds.size() >= kParallelMatchThreshold ? parallel::match_indices(preds, event)
                                                   : serial::match_indices(preds, event);
}

std::vector<CellStats> bin_samples(const GridSpec& grid, std::span<const GeoSample> samples)
{
    return samples.size() >= kParallelBinThreshold ? parallel::bin_samples(grid, samples)
                                                   : serial::bin_samples(grid, samples);
}

}  // namespace rescue::kernels
