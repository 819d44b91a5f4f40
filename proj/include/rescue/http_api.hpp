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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace rescue {
namespace agg {
class AggregationService;
}
namespace broker {
class Broker;
}

/// An HTTP server on its own thread.
class HttpServer {
public:
    HttpServer();
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    httplib::Server& routes() noexcept { return *server_; }

    /// Binds (port 0 picks a free one) and starts serving. Throws
    /// std::system_error when the address cannot be bound.
    std::uint16_t start(const std::string& host, std::uint16_t port);
    void stop();
    bool running() const noexcept { return running_.load(); }
    std::uint16_t port() const noexcept { return port_; }

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<bool> running_{false};
    std::uint16_t port_ = 0;
};

/// GET /api/publishers, /api/publishers/{id}/latest, /api/publishers/{id}/series,
/// /api/heatmap, /api/events/{event_id}, /api/stream, /api/stats, and the
/// dashboard under /ui/ (a placeholder page when `ui_dir` is absent).
void mount_aggregation_api(HttpServer& http, agg::AggregationService& service,
                           const std::optional<std::filesystem::path>& ui_dir);

/// GET /stats with the broker's routing counters.
void mount_broker_stats(HttpServer& http, const broker::Broker& broker);

}  // namespace rescue
