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
#include <stdexcept>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "rescue/edge.hpp"
#include "rescue/kernels.hpp"

namespace rescue::kernels::parallel {

int max_threads() noexcept
{
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::vector<std::uint32_t> match_indices(std::span<const SubscriptionPredicate> preds, const SensorEvent& event)
{
    const auto n = static_cast<std::ptrdiff_t>(preds.size());
    std::vector<unsigned char> hit(preds.size(), 0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        hit[static_cast<std::size_t>(i)] = matches(preds[static_cast<std::size_t>(i)], event) ? 1 : 0;
    }
    std::vector<std::uint32_t> hits;
    for (std::size_t i = 0; i < hit.size(); ++i) {
        if (hit[i]) {
            hits.push_back(static_cast<std::uint32_t>(i));
        }
    }
    return hits;
}

std::vector<CellStats> bin_samples(const GridSpec& grid, std::span<const GeoSample> samples)
{
    const std::size_t n_cells = static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols);
    const int threads = max_threads();
    // One private grid per thread, merged in thread order afterwards.
    std::vector<std::vector<CellStats>> partial(static_cast<std::size_t>(threads), std::vector<CellStats>(n_cells));
    const auto n = static_cast<std::ptrdiff_t>(samples.size());

#pragma omp parallel num_threads(threads)
    {
#if defined(_OPENMP)
        auto& local = partial[static_cast<std::size_t>(omp_get_thread_num())];
#else
        auto& local = partial[0];
#endif
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto& s = samples[static_cast<std::size_t>(i)];
            if (auto idx = cell_index(grid, s.lat, s.lon)) {
                auto& c = local[*idx];
                ++c.count;
                c.sum += s.value;
                c.max = std::max(c.max, s.value);
            }
        }
    }

    std::vector<CellStats> cells(n_cells);
    for (const auto& local : partial) {
        for (std::size_t k = 0; k < n_cells; ++k) {
            cells[k].count += local[k].count;
            cells[k].sum += local[k].sum;
            cells[k].max = std::max(cells[k].max, local[k].max);
        }
    }
    return cells;
}

std::vector<ActivityEstimate> classify_windows(std::span<const Vec3> samples)
{
    if (samples.size() % edge::kWindowSize != 0) {
        throw std::invalid_argument("sample count must be a whole number of windows");
    }
    const auto n = static_cast<std::ptrdiff_t>(samples.size() / edge::kWindowSize);
    std::vector<ActivityEstimate> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t w = 0; w < n; ++w) {
        const auto off = static_cast<std::size_t>(w) * edge::kWindowSize;
        out[static_cast<std::size_t>(w)] =
            edge::classify_features(edge::extract_features(samples.subspan(off, edge::kWindowSize)));
    }
    return out;
}

}  // namespace rescue::kernels::parallel
