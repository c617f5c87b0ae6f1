#pragma once

// Minimal RFC 6455 support: opening handshake, frame encoding and an
// incremental frame parser. Text and control frames only; fragmented
// messages are reassembled.

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cosim/net/socket.hpp"

namespace cosim::net::ws {

inline constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
inline constexpr std::size_t kMaxPayload = 1 << 20;

enum class Opcode : std::uint8_t { continuation = 0x0, text = 0x1, binary = 0x2, close = 0x8, ping = 0x9, pong = 0xA };

class ProtocolError : public NetworkError {
 public:
  using NetworkError::NetworkError;
};

inline std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

inline std::string accept_key(std::string_view client_key) {
  std::string joined(client_key);
  joined += kGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(joined.data()), joined.size(), digest);
  return base64(digest, sizeof(digest));
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

/// Value of a header in a raw HTTP request, case-insensitive on the name.
inline std::optional<std::string> header_value(std::string_view request, std::string_view name) {
  const std::string wanted = lower(name);
  std::size_t pos = request.find("\r\n");
  while (pos != std::string_view::npos) {
    const std::size_t start = pos + 2;
    const std::size_t end = request.find("\r\n", start);
    if (end == std::string_view::npos || end == start) break;
    const std::string_view line = request.substr(start, end - start);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos && lower(line.substr(0, colon)) == wanted) {
      std::string_view v = line.substr(colon + 1);
      while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
      while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
      return std::string(v);
    }
    pos = end;
  }
  return std::nullopt;
}

/// Server reply to an upgrade request, or nothing if it is not one.
inline std::optional<std::string> handshake_response(std::string_view request) {
  if (request.substr(0, 4) != "GET ") return std::nullopt;
  const auto upgrade = header_value(request, "Upgrade");
  const auto key = header_value(request, "Sec-WebSocket-Key");
  if (!upgrade || lower(*upgrade) != "websocket" || !key || key->empty()) return std::nullopt;
  return "HTTP/1.1 101 Switching Protocols\r\n"
         "Upgrade: websocket\r\n"
         "Connection: Upgrade\r\n"
         "Sec-WebSocket-Accept: " +
         accept_key(*key) + "\r\n\r\n";
}

inline std::string encode_frame(std::string_view payload, Opcode op = Opcode::text,
                                std::optional<std::uint32_t> mask = std::nullopt) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> shift) & 0xFF));
  }
  if (!mask) {
    out.append(payload);
    return out;
  }
  const std::uint8_t key[4] = {static_cast<std::uint8_t>(*mask >> 24), static_cast<std::uint8_t>(*mask >> 16),
                               static_cast<std::uint8_t>(*mask >> 8), static_cast<std::uint8_t>(*mask)};
  out.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

struct Frame {
  Opcode opcode = Opcode::text;
  std::string payload;
};

/// Incremental parser. feed() bytes, then take complete messages with next().
class FrameParser {
 public:
  explicit FrameParser(bool require_mask) : require_mask_(require_mask) {}

  void feed(std::string_view bytes) { buffer_.append(bytes); }

  /// Next complete message (data messages reassembled), or nothing if more
  /// bytes are needed. Throws ProtocolError on a malformed stream.
  std::optional<Frame> next() {
    for (;;) {
      if (buffer_.size() < 2) return std::nullopt;
      const auto b0 = static_cast<std::uint8_t>(buffer_[0]);
      const auto b1 = static_cast<std::uint8_t>(buffer_[1]);
      const bool fin = b0 & 0x80;
      if (b0 & 0x70) throw ProtocolError("reserved bits set");
      const auto op = static_cast<Opcode>(b0 & 0x0F);
      const bool masked = b1 & 0x80;
      if (require_mask_ && !masked) throw ProtocolError("client frame not masked");
      std::uint64_t len = b1 & 0x7F;
      std::size_t header = 2;
      if (len == 126) {
        if (buffer_.size() < 4) return std::nullopt;
        len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(buffer_[2])) << 8) |
              static_cast<std::uint8_t>(buffer_[3]);
        header = 4;
      } else if (len == 127) {
        if (buffer_.size() < 10) return std::nullopt;
        len = 0;
        for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buffer_[2 + i]);
        header = 10;
      }
      if (len > kMaxPayload) throw ProtocolError("frame too large");
      const bool control = static_cast<std::uint8_t>(op) & 0x8;
      if (control && (len > 125 || !fin)) throw ProtocolError("bad control frame");
      if (masked) header += 4;
      if (buffer_.size() < header + len) return std::nullopt;
      std::string payload = buffer_.substr(header, static_cast<std::size_t>(len));
      if (masked) {
        const char* key = buffer_.data() + header - 4;
        for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key[i % 4]);
      }
      buffer_.erase(0, header + static_cast<std::size_t>(len));

      if (control) return Frame{op, std::move(payload)};
      if (op == Opcode::continuation) {
        if (!partial_) throw ProtocolError("continuation without a start frame");
        partial_->payload += payload;
      } else if (op == Opcode::text || op == Opcode::binary) {
        if (partial_) throw ProtocolError("new message inside a fragmented one");
        partial_ = Frame{op, std::move(payload)};
      } else {
        throw ProtocolError("unknown opcode");
      }
      if (partial_->payload.size() > kMaxPayload) throw ProtocolError("message too large");
      if (fin) {
        Frame out = std::move(*partial_);
        partial_.reset();
        return out;
      }
    }
  }

 private:
  bool require_mask_;
  std::string buffer_;
  std::optional<Frame> partial_;
};

/// Blocking client used by tools and tests.
class Client {
 public:
  static Client connect(const std::string& host, int port, std::chrono::milliseconds timeout = std::chrono::milliseconds(2000)) {
    Client c;
    c.stream_ = TcpStream::connect(host, port, timeout);
    unsigned char raw[16];
    std::random_device rd;
    for (auto& b : raw) b = static_cast<unsigned char>(rd());
    const std::string key = base64(raw, sizeof(raw));
    const std::string request = "GET / HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                                "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n";
    if (!c.stream_.send_all(request)) throw NetworkError("handshake send failed");
    std::string& pending = c.stream_.pending();
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (pending.find("\r\n\r\n") == std::string::npos) {
      if (std::chrono::steady_clock::now() >= deadline) throw NetworkError("handshake timed out");
      if (!c.stream_.read_some(pending, std::chrono::milliseconds(20))) throw NetworkError("handshake closed");
    }
    const std::size_t end = pending.find("\r\n\r\n") + 4;
    const std::string response = pending.substr(0, end);
    pending.erase(0, end);
    if (response.find(" 101 ") == std::string::npos || header_value(response, "Sec-WebSocket-Accept") != accept_key(key)) {
      throw ProtocolError("bad handshake response");
    }
    c.parser_.feed(pending);
    pending.clear();
    return c;
  }

  bool send_text(std::string_view text) { return stream_.send_all(encode_frame(text, Opcode::text, next_mask())); }
  bool send_frame(std::string_view payload, Opcode op) { return stream_.send_all(encode_frame(payload, op, next_mask())); }

  /// Next text message within the timeout; pings are answered internally.
  std::optional<std::string> read_text(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      while (auto f = parser_.next()) {
        if (f->opcode == Opcode::text) return f->payload;
        if (f->opcode == Opcode::ping) send_frame(f->payload, Opcode::pong);
        if (f->opcode == Opcode::close) throw NetworkError("closed by server");
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) return std::nullopt;
      std::string chunk;
      if (!stream_.read_some(chunk, std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now))) {
        throw NetworkError("connection closed");
      }
      parser_.feed(chunk);
    }
  }

  void close() {
    send_frame("", Opcode::close);
    stream_.shutdown();
  }

 private:
  Client() : parser_(false) {}
  std::uint32_t next_mask() { return static_cast<std::uint32_t>(rng_()); }

  TcpStream stream_;
  FrameParser parser_;
  std::mt19937 rng_{0x5eed};
};

}  // namespace cosim::net::ws
