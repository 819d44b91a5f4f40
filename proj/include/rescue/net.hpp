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

// Thin POSIX TCP helpers shared by the broker and the client SDK.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

namespace rescue::net {

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) noexcept : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(other.release()) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    int release() noexcept
    {
        int fd = fd_;
        fd_ = -1;
        return fd;
    }
    /// Wakes any thread blocked reading or writing this socket.
    void shutdown() noexcept;
    void close() noexcept;

private:
    int fd_ = -1;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// "host:port", ":port" or "port". Throws std::invalid_argument.
Endpoint parse_endpoint(std::string_view text, std::uint16_t default_port);

/// Throws std::system_error (e.g. address in use).
Socket listen_tcp(const std::string& host, std::uint16_t port, int backlog = 64);
std::uint16_t local_port(const Socket& s);

/// Waits up to timeout_ms for a connection; nullopt on timeout.
std::optional<Socket> accept_for(const Socket& listener, int timeout_ms);

/// Throws std::system_error; errc::timed_out when the timeout elapses.
Socket connect_tcp(const Endpoint& endpoint, int timeout_ms);

/// Fixes the kernel buffer size, which also turns off autotuning.
void set_send_buffer(int fd, int bytes) noexcept;
void set_receive_buffer(int fd, int bytes) noexcept;

/// Throws std::system_error on failure (including a peer that went away).
void write_all(int fd, std::string_view data);

/// Buffered reader splitting a byte stream on '\n' with a length cap.
class LineReader {
public:
    enum class Status { Line, Eof, Oversize, Timeout, Error };

    LineReader(int fd, std::size_t max_line) : fd_(fd), max_line_(max_line) {}

    /// timeout_ms < 0 waits indefinitely. The returned line excludes '\n'.
    Status read_line(std::string& line, int timeout_ms = -1);

private:
    int fd_;
    std::size_t max_line_;
    std::string buffer_;
    std::size_t scanned_ = 0;
};

}  // namespace rescue::net
