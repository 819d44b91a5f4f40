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

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rescue/net.hpp"

namespace rescue::loadtest {

struct Options {
    net::Endpoint broker;
    int publishers = 1;
    int subscribers = 30;
    /// Subscribers that register and then stop reading their socket.
    int slow_subscribers = 0;
    double rate_hz = 5.0;  // per publisher
    double duration_s = 60.0;
    std::string filter;  // empty: match-all
    /// Wait after the last send for stragglers.
    double drain_s = 3.0;
};

struct Report {
    std::uint64_t published = 0;
    std::uint64_t expected = 0;  // published x reading subscribers
    std::uint64_t received = 0;
    std::uint64_t lost = 0;
    std::uint64_t order_violations = 0;
    std::uint64_t slow_expected = 0;
    std::uint64_t slow_received = 0;
    std::uint64_t client_drops = 0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double p99_ms = 0.0;
    double max_ms = 0.0;
    double elapsed_s = 0.0;
    std::vector<std::string> errors;

    double delivery_rate() const noexcept;
    nlohmann::ordered_json to_json() const;
};

/// Nearest-rank percentile of an unsorted sample (p in [0, 100]).
double percentile(std::vector<double> values, double p);

/// Runs the fan-out workload in this process. Throws client::ClientError
/// when the broker cannot be reached.
Report run(const Options& options);

}  // namespace rescue::loadtest
