#pragma once

// Thin RAII wrappers over POSIX UDP and TCP sockets.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "cosim/error.hpp"

namespace cosim::net {

class NetworkError : public Error {
 public:
  using Error::Error;
};

class BindFailure : public NetworkError {
 public:
  using NetworkError::NetworkError;
};

inline std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  /// Unblocks other threads waiting on this descriptor.
  void shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

inline sockaddr_in make_address(const std::string& host, int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (host.empty() || host == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
      throw NetworkError("cannot resolve host " + host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  return addr;
}

inline int bound_port(const Fd& fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

/// Waits until fd is readable; false on timeout.
inline bool wait_readable(int fd, std::chrono::milliseconds timeout) {
  pollfd p{fd, POLLIN, 0};
  const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  return r > 0;
}

class UdpSocket {
 public:
  /// Port 0 binds an ephemeral port.
  static UdpSocket bind(int port, const std::string& host = "127.0.0.1") {
    UdpSocket s;
    s.fd_ = Fd(::socket(AF_INET, SOCK_DGRAM, 0));
    if (!s.fd_.valid()) throw BindFailure(errno_text("socket"));
    const int one = 1;
    ::setsockopt(s.fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const int rcvbuf = 4 << 20;
    ::setsockopt(s.fd_.get(), SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof(rcvbuf));
    sockaddr_in addr = make_address(host, port);
    if (::bind(s.fd_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw BindFailure(errno_text("bind udp port " + std::to_string(port)));
    }
    return s;
  }

  static UdpSocket sender() {
    UdpSocket s;
    s.fd_ = Fd(::socket(AF_INET, SOCK_DGRAM, 0));
    if (!s.fd_.valid()) throw NetworkError(errno_text("socket"));
    return s;
  }

  void send_to(std::string_view bytes, const sockaddr_in& to) const {
    ::sendto(fd_.get(), bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&to), sizeof(to));
  }

  /// Receives one datagram, or nothing within the timeout.
  std::optional<std::string> receive(std::chrono::milliseconds timeout) const {
    if (!wait_readable(fd_.get(), timeout)) return std::nullopt;
    std::string buf(65536, '\0');
    const ssize_t n = ::recv(fd_.get(), buf.data(), buf.size(), 0);
    if (n < 0) return std::nullopt;
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

  int port() const { return bound_port(fd_); }
  const Fd& fd() const { return fd_; }

 private:
  Fd fd_;
};

class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(Fd fd) : fd_(std::move(fd)) {
    const int one = 1;
    ::setsockopt(fd_.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  static TcpStream connect(const std::string& host, int port,
                           std::chrono::milliseconds timeout = std::chrono::milliseconds(2000)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
      sockaddr_in addr = make_address(host, port);
      if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
        return TcpStream(std::move(fd));
      }
      if (std::chrono::steady_clock::now() >= deadline) {
        throw NetworkError(errno_text("connect " + host + ":" + std::to_string(port)));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

  /// Blocking write of the whole buffer; false if the peer is gone.
  bool send_all(std::string_view bytes) const {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      const ssize_t n = ::send(fd_.get(), bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) {
        if (n < 0 && errno == EINTR) continue;
        return false;
      }
      sent += static_cast<std::size_t>(n);
    }
    return true;
  }

  /// Non-blocking write attempt; returns bytes written, or -1 when the peer
  /// is gone.
  ssize_t send_some(std::string_view bytes) const {
    const ssize_t n = ::send(fd_.get(), bytes.data(), bytes.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
    if (n < 0) return (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) ? 0 : -1;
    return n;
  }

  /// Reads available bytes into `out`; false on EOF or error, true on data
  /// or timeout.
  bool read_some(std::string& out, std::chrono::milliseconds timeout) {
    if (!wait_readable(fd_.get(), timeout)) return true;
    char buf[65536];
    const ssize_t n = ::recv(fd_.get(), buf, sizeof(buf), 0);
    if (n <= 0) return false;
    out.append(buf, static_cast<std::size_t>(n));
    return true;
  }

  /// Returns the next newline-terminated line (without the newline), or
  /// nothing on timeout. Throws NetworkError when the peer closes.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = pending_.find('\n'); nl != std::string::npos) {
        std::string line = pending_.substr(0, nl);
        pending_.erase(0, nl + 1);
        return line;
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) return std::nullopt;
      if (!read_some(pending_, std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now))) {
        throw NetworkError("connection closed");
      }
    }
  }

  std::string& pending() { return pending_; }
  const Fd& fd() const { return fd_; }
  bool valid() const { return fd_.valid(); }
  void shutdown() const { fd_.shutdown(); }

 private:
  Fd fd_;
  std::string pending_;
};

class TcpListener {
 public:
  static TcpListener bind(int port, const std::string& host = "127.0.0.1") {
    TcpListener l;
    l.fd_ = Fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!l.fd_.valid()) throw BindFailure(errno_text("socket"));
    const int one = 1;
    ::setsockopt(l.fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = make_address(host, port);
    if (::bind(l.fd_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(l.fd_.get(), 16) != 0) {
      throw BindFailure(errno_text("bind tcp port " + std::to_string(port)));
    }
    return l;
  }

  std::optional<TcpStream> accept(std::chrono::milliseconds timeout) const {
    if (!wait_readable(fd_.get(), timeout)) return std::nullopt;
    const int c = ::accept(fd_.get(), nullptr, nullptr);
    if (c < 0) return std::nullopt;
    return TcpStream(Fd(c));
  }

  int port() const { return bound_port(fd_); }
  int native() const { return fd_.get(); }
  void shutdown() const { fd_.shutdown(); }

 private:
  Fd fd_;
};

}  // namespace cosim::net
