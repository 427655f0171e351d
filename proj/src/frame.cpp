#include "qdnet/frame.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace qdnet {

namespace {

void throw_errno(const std::string& what) {
    throw std::runtime_error(what + ": " + std::strerror(errno));
}

bool send_all(int fd, const uint8_t* data, size_t len) {
    size_t sent = 0;
    while (sent < len) {
        ssize_t n = ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<size_t>(n);
    }
    return true;
}

// Returns bytes read; 0 on clean EOF at a frame boundary, throws mid-frame.
bool recv_all(int fd, uint8_t* data, size_t len, bool eof_ok) {
    size_t got = 0;
    while (got < len) {
        ssize_t n = ::recv(fd, data + got, len - got, 0);
        if (n == 0) {
            if (got == 0 && eof_ok) return false;
            throw std::runtime_error("connection closed mid-frame");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            if (got == 0 && eof_ok &&
                (errno == ECONNRESET || errno == EBADF))
                return false;
            throw_errno("recv");
        }
        got += static_cast<size_t>(n);
    }
    return true;
}

sockaddr_in resolve(const std::string& host, uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        return addr;
    }
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw std::runtime_error("cannot resolve host '" + host + "'");
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

}  // namespace

int tcp_listen(const std::string& host, uint16_t port, int backlog) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = resolve(host, port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw_errno("bind " + host + ":" + std::to_string(port));
    }
    if (::listen(fd, backlog) != 0) {
        ::close(fd);
        throw_errno("listen");
    }
    return fd;
}

int tcp_accept(int listen_fd) {
    for (;;) {
        int fd = ::accept(listen_fd, nullptr, nullptr);
        if (fd >= 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            return fd;
        }
        if (errno == EINTR) continue;
        return -1;
    }
}

int tcp_connect(const std::string& host, uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    sockaddr_in addr = resolve(host.empty() ? "127.0.0.1" : host, port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int saved = errno;
        ::close(fd);
        errno = saved;
        throw_errno("connect " + host + ":" + std::to_string(port));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return fd;
}

void tcp_close(int fd) {
    if (fd >= 0) {
        ::shutdown(fd, SHUT_RDWR);
        ::close(fd);
    }
}

void write_frame(int fd, const json& body) {
    std::string text = body.dump();
    if (text.size() > kMaxFrameBytes)
        throw std::runtime_error("frame exceeds size limit");
    uint8_t hdr[4] = {static_cast<uint8_t>(text.size() >> 24),
                      static_cast<uint8_t>(text.size() >> 16),
                      static_cast<uint8_t>(text.size() >> 8),
                      static_cast<uint8_t>(text.size())};
    std::vector<uint8_t> buf;
    buf.reserve(4 + text.size());
    buf.insert(buf.end(), hdr, hdr + 4);
    buf.insert(buf.end(), text.begin(), text.end());
    if (!send_all(fd, buf.data(), buf.size()))
        throw std::runtime_error("send failed");
}

std::optional<json> read_frame(int fd) {
    uint8_t hdr[4];
    if (!recv_all(fd, hdr, 4, /*eof_ok=*/true)) return std::nullopt;
    size_t len = (static_cast<size_t>(hdr[0]) << 24) |
                 (static_cast<size_t>(hdr[1]) << 16) |
                 (static_cast<size_t>(hdr[2]) << 8) | hdr[3];
    if (len > kMaxFrameBytes) throw std::runtime_error("oversized frame");
    std::vector<uint8_t> buf(len);
    recv_all(fd, buf.data(), len, /*eof_ok=*/false);
    return json::parse(buf.begin(), buf.end());
}

}  // namespace qdnet
