#pragma once

// Operator console service: WebSocket connections carrying bridge-encoded
// messages. State frames go out on a fixed period; operator commands come
// in and are acknowledged or rejected per message.

#include <poll.h>

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "cosim/bridge_protocol.hpp"
#include "cosim/net/transform_publisher.hpp"
#include "cosim/net/websocket.hpp"

namespace cosim::harness {

inline constexpr int kDefaultGatewayPort = 9880;

class Gateway {
 public:
  /// Returns an error text to reject a command, nothing to accept it.
  using Handler = std::function<std::optional<std::string>(const protocol::Message&)>;
  using StatusFn = std::function<protocol::StateFrame()>;

  Gateway(int port, Handler handler, StatusFn status,
          std::chrono::milliseconds period = std::chrono::milliseconds(50), const std::string& host = "127.0.0.1")
      : listener_(net::TcpListener::bind(port, host)),
        handler_(std::move(handler)),
        status_(std::move(status)),
        period_(period) {
    io_ = std::thread([this] { io_loop(); });
    if (status_) ticker_ = std::thread([this] { tick_loop(); });
  }
  ~Gateway() { stop(); }
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void stop() {
    running_ = false;
    if (io_.joinable()) io_.join();
    if (ticker_.joinable()) ticker_.join();
    clients_.stop();
  }

  int port() const { return listener_.port(); }
  std::size_t clients() const { return clients_.size(); }
  std::size_t frames_sent() const { return frames_sent_; }

  /// Sends one message to every connected console.
  void broadcast(const protocol::Message& m) { clients_.broadcast(net::ws::encode_frame(trimmed(m))); }

  static bool is_operator_command(const protocol::Message& m) {
    return std::holds_alternative<protocol::StartCommand>(m) || std::holds_alternative<protocol::PauseCommand>(m) ||
           std::holds_alternative<protocol::ResetCommand>(m) || std::holds_alternative<protocol::ReplayCommand>(m) ||
           std::holds_alternative<protocol::ManualDrive>(m) || std::holds_alternative<protocol::ReleaseManual>(m);
  }

 private:
  struct Conn {
    net::TcpStream pending;  // before the upgrade completes
    std::string request;
    std::shared_ptr<net::ClientSet::Client> client;
    net::ws::FrameParser parser{true};
    bool closed = false;
  };

  static std::string trimmed(const protocol::Message& m) {
    std::string text = protocol::encode(m);
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
  }

  void reply(const Conn& c, const protocol::Message& m) {
    clients_.send_to(c.client->id, net::ws::encode_frame(trimmed(m)));
  }

  void io_loop() {
    std::vector<std::unique_ptr<Conn>> conns;
    while (running_) {
      std::vector<pollfd> fds;
      fds.push_back({listener_.native(), POLLIN, 0});
      for (const auto& c : conns) fds.push_back({fd_of(*c), POLLIN, 0});
      if (::poll(fds.data(), fds.size(), 20) <= 0) continue;
      if (fds[0].revents & POLLIN) {
        if (auto s = listener_.accept(std::chrono::milliseconds(0))) {
          auto c = std::make_unique<Conn>();
          c->pending = std::move(*s);
          conns.push_back(std::move(c));
        }
      }
      for (std::size_t i = 0; i < conns.size(); ++i) {
        if (fds[i + 1].revents & (POLLIN | POLLHUP | POLLERR)) service(*conns[i]);
      }
      std::erase_if(conns, [this](const std::unique_ptr<Conn>& c) {
        if (c->closed && c->client) clients_.drop(c->client->id);
        return c->closed;
      });
    }
  }

  static int fd_of(const Conn& c) { return c.client ? c.client->stream.fd().get() : c.pending.fd().get(); }

  void service(Conn& c) {
    std::string chunk;
    net::TcpStream& stream = c.client ? c.client->stream : c.pending;
    if (!stream.read_some(chunk, std::chrono::milliseconds(0))) {
      c.closed = true;
      return;
    }
    if (!c.client) {
      c.request += chunk;
      if (c.request.size() > 16384) {
        c.closed = true;
        return;
      }
      const std::size_t end = c.request.find("\r\n\r\n");
      if (end == std::string::npos) return;
      const auto response = net::ws::handshake_response(c.request.substr(0, end + 4));
      if (!response) {
        c.pending.send_all("HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
        c.closed = true;
        return;
      }
      if (!c.pending.send_all(*response)) {
        c.closed = true;
        return;
      }
      const std::string rest = c.request.substr(end + 4);
      c.client = clients_.add(std::move(c.pending));
      c.parser.feed(rest);
    } else {
      c.parser.feed(chunk);
    }
    try {
      while (auto frame = c.parser.next()) handle_frame(c, *frame);
    } catch (const net::ws::ProtocolError&) {
      clients_.send_to(c.client->id, net::ws::encode_frame("", net::ws::Opcode::close));
      c.closed = true;
    }
  }

  void handle_frame(Conn& c, const net::ws::Frame& f) {
    using net::ws::Opcode;
    if (f.opcode == Opcode::ping) {
      clients_.send_to(c.client->id, net::ws::encode_frame(f.payload, Opcode::pong));
      return;
    }
    if (f.opcode == Opcode::close) {
      clients_.send_to(c.client->id, net::ws::encode_frame("", Opcode::close));
      c.closed = true;
      return;
    }
    if (f.opcode != Opcode::text) {
      reply(c, protocol::ErrorReply{"binary messages are not supported"});
      return;
    }
    protocol::Message msg;
    try {
      msg = protocol::decode(f.payload);
    } catch (const protocol::DecodeError& e) {
      reply(c, protocol::ErrorReply{e.what()});
      return;
    }
    if (!is_operator_command(msg)) {
      reply(c, protocol::ErrorReply{std::string("not an operator command: ") + protocol::type_name(msg)});
      return;
    }
    std::optional<std::string> error;
    try {
      error = handler_ ? handler_(msg) : std::optional<std::string>("no handler");
    } catch (const std::exception& e) {
      error = e.what();
    }
    if (error) {
      reply(c, protocol::ErrorReply{*error});
    } else {
      reply(c, protocol::Ack{protocol::type_name(msg)});
    }
  }

  void tick_loop() {
    auto next = std::chrono::steady_clock::now();
    while (running_) {
      next += period_;
      broadcast(status_());
      ++frames_sent_;
      std::this_thread::sleep_until(next);
    }
  }

  net::TcpListener listener_;
  Handler handler_;
  StatusFn status_;
  std::chrono::milliseconds period_;
  net::ClientSet clients_;
  std::atomic<bool> running_{true};
  std::atomic<std::size_t> frames_sent_{0};
  std::thread io_;
  std::thread ticker_;
};

}  // namespace cosim::harness
