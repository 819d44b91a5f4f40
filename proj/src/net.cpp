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
#include "rescue/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <stdexcept>

namespace rescue::net {

namespace {

[[noreturn]] void throw_errno(const char* what, int err = errno)
{
    throw std::system_error(err, std::generic_category(), what);
}

sockaddr_in resolve(const std::string& host, std::uint16_t port)
{
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0" || host == "*") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        return addr;
    }
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) {
        return addr;
    }
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
        throw std::system_error(std::make_error_code(std::errc::host_unreachable), "cannot resolve " + host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

void set_nodelay(int fd)
{
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

Socket& Socket::operator=(Socket&& other) noexcept
{
    if (this != &other) {
        close();
        fd_ = other.release();
    }
    return *this;
}

void Socket::shutdown() noexcept
{
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
    }
}

void Socket::close() noexcept
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Endpoint parse_endpoint(std::string_view text, std::uint16_t default_port)
{
    Endpoint ep;
    ep.port = default_port;
    if (text.empty()) {
        return ep;
    }
    std::string_view port_part = text;
    if (auto colon = text.rfind(':'); colon != std::string_view::npos) {
        if (colon > 0) {
            ep.host = std::string(text.substr(0, colon));
        }
        port_part = text.substr(colon + 1);
    } else if (text.find_first_not_of("0123456789") != std::string_view::npos) {
        ep.host = std::string(text);
        return ep;
    }
    unsigned value = 0;
    auto [end, ec] = std::from_chars(port_part.data(), port_part.data() + port_part.size(), value);
    if (ec != std::errc() || end != port_part.data() + port_part.size() || value > 65535) {
        throw std::invalid_argument("bad port in address \"" + std::string(text) + "\"");
    }
    ep.port = static_cast<std::uint16_t>(value);
    return ep;
}

Socket listen_tcp(const std::string& host, std::uint16_t port, int backlog)
{
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) {
        throw_errno("socket");
    }
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const auto addr = resolve(host, port);
    if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw_errno("bind");
    }
    if (::listen(s.fd(), backlog) != 0) {
        throw_errno("listen");
    }
    return s;
}

std::uint16_t local_port(const Socket& s)
{
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        throw_errno("getsockname");
    }
    return ntohs(addr.sin_port);
}

std::optional<Socket> accept_for(const Socket& listener, int timeout_ms)
{
    pollfd pfd{listener.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc <= 0) {
        return std::nullopt;
    }
    const int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
        return std::nullopt;
    }
    set_nodelay(fd);
    return Socket(fd);
}

Socket connect_tcp(const Endpoint& endpoint, int timeout_ms)
{
    const auto addr = resolve(endpoint.host, endpoint.port);
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
    if (!s.valid()) {
        throw_errno("socket");
    }
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        if (errno != EINPROGRESS) {
            throw_errno("connect");
        }
        pollfd pfd{s.fd(), POLLOUT, 0};
        const int rc = ::poll(&pfd, 1, timeout_ms);
        if (rc == 0) {
            throw std::system_error(std::make_error_code(std::errc::timed_out), "connect");
        }
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (rc < 0 || err != 0) {
            throw_errno("connect", rc < 0 ? errno : err);
        }
    }
    const int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags & ~O_NONBLOCK);
    set_nodelay(s.fd());
    return s;
}

void write_all(int fd, std::string_view data)
{
    while (!data.empty()) {
        const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw_errno("send");
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

LineReader::Status LineReader::read_line(std::string& line, int timeout_ms)
{
    while (true) {
        const auto nl = buffer_.find('\n', scanned_);
        if (nl != std::string::npos) {
            if (nl > max_line_) {
                return Status::Oversize;
            }
            line.assign(buffer_, 0, nl);
            buffer_.erase(0, nl + 1);
            scanned_ = 0;
            return Status::Line;
        }
        scanned_ = buffer_.size();
        if (buffer_.size() > max_line_) {
            return Status::Oversize;
        }
        if (timeout_ms >= 0) {
            pollfd pfd{fd_, POLLIN, 0};
            const int rc = ::poll(&pfd, 1, timeout_ms);
            if (rc == 0) {
                return Status::Timeout;
            }
            if (rc < 0 && errno != EINTR) {
                return Status::Error;
            }
        }
        char chunk[8192];
        const auto n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n == 0) {
            return Status::Eof;
        }
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return Status::Error;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void set_send_buffer(int fd, int bytes) noexcept
{
    ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &bytes, sizeof bytes);
}

void set_receive_buffer(int fd, int bytes) noexcept
{
    ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &bytes, sizeof bytes);
}

}  // namespace rescue::net
