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
#include "rescue/http_api.hpp"

#include <charconv>
#include <system_error>

#include <httplib.h>
#include <json.hpp>

#include "rescue/aggregate.hpp"
#include "rescue/broker.hpp"

namespace rescue {

namespace {

using nlohmann::ordered_json;

constexpr const char* kJson = "application/json";

constexpr const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>rescue-sense</title></head>
<body>
<h1>rescue-sense</h1>
<p>The dashboard bundle is not installed. Start the service with <code>--ui-dir</code>
pointing at a built dashboard, or use the JSON API under <code>/api/</code>.</p>
</body></html>
)";

void send_json(httplib::Response& res, const ordered_json& body, int status = 200)
{
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message)
{
    send_json(res, ordered_json{{"error", code}, {"message", message}}, status);
}

struct BadParam : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::optional<std::int64_t> int_param(const httplib::Request& req, const char* name)
{
    if (!req.has_param(name)) {
        return std::nullopt;
    }
    const auto text = req.get_param_value(name);
    if (text.empty()) {
        return std::nullopt;
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
        throw BadParam(std::string(name) + " must be an integer");
    }
    return v;
}

SensorKind kind_param(const httplib::Request& req, std::optional<SensorKind> fallback)
{
    if (!req.has_param("kind") || req.get_param_value("kind").empty()) {
        if (fallback) {
            return *fallback;
        }
        throw BadParam("kind is required");
    }
    auto k = parse_kind(req.get_param_value("kind"));
    if (!k) {
        throw BadParam("unknown kind '" + req.get_param_value("kind") + "'");
    }
    return *k;
}

}  // namespace

HttpServer::HttpServer() : server_(std::make_unique<httplib::Server>())
{
    server_->new_task_queue = [] { return new httplib::ThreadPool(64); };
}

HttpServer::~HttpServer()
{
    stop();
}

std::uint16_t HttpServer::start(const std::string& host, std::uint16_t port)
{
    int bound = -1;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
    } else if (server_->bind_to_port(host, port)) {
        bound = port;
    }
    if (bound <= 0) {
        throw std::system_error(std::make_error_code(std::errc::address_in_use),
                                "cannot bind HTTP " + host + ":" + std::to_string(port));
    }
    port_ = static_cast<std::uint16_t>(bound);
    running_.store(true);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void HttpServer::stop()
{
    if (!running_.exchange(false)) {
        return;
    }
    server_->stop();
    if (thread_.joinable()) {
        thread_.join();
    }
}

void mount_aggregation_api(HttpServer& http, agg::AggregationService& service,
                           const std::optional<std::filesystem::path>& ui_dir)
{
    auto& svr = http.routes();

    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const BadParam& e) {
            send_error(res, 400, "BadRequest", e.what());
        } catch (const agg::BadRange& e) {
            send_error(res, 400, "BadRange", e.what());
        } catch (const agg::BadGrid& e) {
            send_error(res, 400, "BadGrid", e.what());
        } catch (const PredicateError& e) {
            send_error(res, 400, "InvalidPredicate", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "InternalError", e.what());
        } catch (...) {
            send_error(res, 500, "InternalError", "unknown error");
        }
    });

    svr.Get("/api/publishers", [&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, service.publishers_json());
    });

    svr.Get(R"(/api/publishers/([^/]+)/latest)", [&service](const httplib::Request& req, httplib::Response& res) {
        send_json(res, service.latest_json(req.matches[1]));
    });

    svr.Get(R"(/api/publishers/([^/]+)/series)", [&service](const httplib::Request& req, httplib::Response& res) {
        const auto kind = kind_param(req, std::nullopt);
        const auto from = int_param(req, "from").value_or(agg::kMinTime);
        const auto to = int_param(req, "to").value_or(agg::kMaxTime);
        const auto max_points = int_param(req, "max_points").value_or(200);
        if (max_points < 2) {
            throw agg::BadRange("max_points must be at least 2");
        }
        const auto series = agg::query_series(service.store(), req.matches[1], kind, from, to,
                                              static_cast<std::size_t>(max_points));
        send_json(res, agg::to_json(series));
    });

    svr.Get("/api/heatmap", [&service](const httplib::Request& req, httplib::Response& res) {
        const auto kind = kind_param(req, SensorKind::Thermometer);
        if (!req.has_param("bbox")) {
            throw BadParam("bbox is required as min_lat,min_lon,max_lat,max_lon");
        }
        const auto box = agg::parse_bbox(req.get_param_value("bbox"));
        if (!box) {
            throw agg::BadRange("bbox must be min_lat,min_lon,max_lat,max_lon");
        }
        const auto rows = int_param(req, "rows").value_or(16);
        const auto cols = int_param(req, "cols").value_or(16);
        if (rows < 1 || cols < 1 || rows > agg::kMaxGridSide || cols > agg::kMaxGridSide) {
            throw agg::BadGrid("rows and cols must be within [1, 256]");
        }
        const auto map = agg::heatmap(service.store(), kind, *box, static_cast<int>(rows), static_cast<int>(cols),
                                      int_param(req, "from").value_or(agg::kMinTime),
                                      int_param(req, "to").value_or(agg::kMaxTime));
        send_json(res, agg::to_json(map));
    });

    svr.Get(R"(/api/events/(.+))", [&service](const httplib::Request& req, httplib::Response& res) {
        if (auto raw = service.store().raw(req.matches[1])) {
            res.set_content(*raw, kJson);
        } else {
            send_error(res, 404, "NotFound", "no stored event with that id");
        }
    });

    svr.Get("/api/stats", [&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, service.stats_json());
    });

    svr.Get("/api/stream", [&service, &http](const httplib::Request& req, httplib::Response& res) {
        const auto filter = req.has_param("filter") ? req.get_param_value("filter") : std::string();
        const bool presence = !req.has_param("presence") || req.get_param_value("presence") != "0";
        auto queue = service.open_stream(filter, presence);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [queue, &http](std::size_t, httplib::DataSink& sink) {
                if (!http.running() || queue->closed()) {
                    sink.done();
                    return true;
                }
                auto item = queue->pop(std::chrono::milliseconds(1000));
                const std::string chunk = item ? std::move(*item) : std::string(": keepalive\n\n");
                return sink.write(chunk.data(), chunk.size());
            },
            [queue, &service](bool) { service.close_stream(queue); });
    });

    svr.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });

    bool mounted = false;
    if (ui_dir && std::filesystem::is_directory(*ui_dir)) {
        mounted = svr.set_mount_point("/ui", ui_dir->string());
    }
    if (!mounted) {
        svr.Get(R"(/ui/?)", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(kPlaceholderPage, "text/html");
        });
    }
}

void mount_broker_stats(HttpServer& http, const broker::Broker& broker)
{
    http.routes().Get("/stats", [&broker](const httplib::Request&, httplib::Response& res) {
        const auto s = broker.stats();
        send_json(res, ordered_json{{"events_routed", s.events_routed},
                                    {"deliveries", s.deliveries},
                                    {"drops", s.drops},
                                    {"active_sessions", s.active_sessions},
                                    {"subscriptions", broker.registry().size()}});
    });
}

}  // namespace rescue
