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

// Serial vs OpenMP kernels. Run: ./bench_kernels --benchmark_counters_tabular=true

#include <random>

#include <benchmark/benchmark.h>

#include "rescue/kernels.hpp"
#include "rescue/sim.hpp"

using namespace rescue;

namespace {

std::vector<SubscriptionPredicate> make_predicates(std::size_t n)
{
    static const char* const templates[] = {
        "kind=THERMOMETER and value>60",
        "kind=LIGHT,HUMIDITY",
        "geo in [10.0,20.0,10.5,20.5] and kind=GPS",
        "activity=STILL and confidence>=70",
        "publisher=\"p-7\"",
        "value<=1013.25 and kind=BAROMETER",
    };
    std::vector<SubscriptionPredicate> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(parse_predicate(templates[i % std::size(templates)], "s." + std::to_string(i)));
    }
    return out;
}

SensorEvent sample_event()
{
    SensorEvent e;
    e.event_id = "p-7:bench:1";
    e.publisher_id = "p-7";
    e.seq = 1;
    e.timestamp_ms = 1'700'000'000'000;
    e.kind = SensorKind::Thermometer;
    e.value = 75.0;
    e.unit = std::string(unit_for(e.kind));
    e.position = {10.2, 20.2, 5.0};
    return e;
}

std::vector<kernels::GeoSample> make_samples(std::size_t n)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> lat(10.0, 10.5), lon(20.0, 20.5), val(0.0, 400.0);
    std::vector<kernels::GeoSample> out(n);
    for (auto& s : out) {
        s = {lat(rng), lon(rng), val(rng)};
    }
    return out;
}

const kernels::GridSpec kGrid{{10.0, 20.0, 10.5, 20.5}, 64, 64};

void BM_MatchSerial(benchmark::State& state)
{
    const auto preds = make_predicates(static_cast<std::size_t>(state.range(0)));
    const auto e = sample_event();
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::serial::match_indices(preds, e));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MatchParallel(benchmark::State& state)
{
    const auto preds = make_predicates(static_cast<std::size_t>(state.range(0)));
    const auto e = sample_event();
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::parallel::match_indices(preds, e));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
    state.counters["threads"] = kernels::parallel::max_threads();
}

void BM_BinSerial(benchmark::State& state)
{
    const auto samples = make_samples(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::serial::bin_samples(kGrid, samples));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BinParallel(benchmark::State& state)
{
    const auto samples = make_samples(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::parallel::bin_samples(kGrid, samples));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
    state.counters["threads"] = kernels::parallel::max_threads();
}

std::vector<Vec3> make_windows(std::size_t windows)
{
    return sim::accel_trace(ActivityState::Walking, static_cast<double>(windows * 128) / 50.0, 7);
}

void BM_ClassifySerial(benchmark::State& state)
{
    const auto samples = make_windows(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::serial::classify_windows(samples));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ClassifyParallel(benchmark::State& state)
{
    const auto samples = make_windows(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::parallel::classify_windows(samples));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
    state.counters["threads"] = kernels::parallel::max_threads();
}

}  // namespace

BENCHMARK(BM_MatchSerial)->RangeMultiplier(8)->Range(64, 32768);
BENCHMARK(BM_MatchParallel)->RangeMultiplier(8)->Range(64, 32768);
BENCHMARK(BM_BinSerial)->RangeMultiplier(8)->Range(1 << 10, 1 << 22);
BENCHMARK(BM_BinParallel)->RangeMultiplier(8)->Range(1 << 10, 1 << 22);
BENCHMARK(BM_ClassifySerial)->RangeMultiplier(4)->Range(4, 1024);
BENCHMARK(BM_ClassifyParallel)->RangeMultiplier(4)->Range(4, 1024);

BENCHMARK_MAIN();
