#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace qdnet {

using json = nlohmann::json;

// Payloads are capped at 1 MiB; the frame cap leaves room for envelope
// fields and base64 expansion.
constexpr size_t kMaxPayloadBytes = 1 << 20;
constexpr size_t kMaxFrameBytes = (1 << 21) + 4096;

// Blocking TCP helpers (IPv4).
int tcp_listen(const std::string& host, uint16_t port, int backlog = 64);
int tcp_accept(int listen_fd);  // -1 when the listener is closed
int tcp_connect(const std::string& host, uint16_t port);
void tcp_close(int fd);

// 4-byte big-endian unsigned length prefix followed by a UTF-8 JSON frame.
// write_frame throws std::runtime_error on I/O failure or oversize.
// read_frame returns nullopt on orderly EOF.
void write_frame(int fd, const json& body);
std::optional<json> read_frame(int fd);

}  // namespace qdnet
