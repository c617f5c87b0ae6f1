#pragma once

// Datagram ingress for simulator commands. One encoded message per datagram.

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "cosim/bridge_protocol.hpp"
#include "cosim/net/socket.hpp"

namespace cosim::net {

inline constexpr int kDefaultCommandPort = 9870;

struct CommandCounters {
  std::size_t received = 0;
  std::size_t delivered = 0;
  std::size_t malformed = 0;
  std::size_t stale = 0;
};

/// Receives datagrams, decodes them and hands valid messages to the sink in
/// arrival order. A waypoint older than the last one applied for the same
/// vehicle is dropped. Decode failures are counted, never fatal.
class CommandServer {
 public:
  using Sink = std::function<void(protocol::Message)>;
  using Logger = std::function<void(const std::string&)>;

  CommandServer(int port, Sink sink, const std::string& host = "127.0.0.1", Logger logger = {})
      : socket_(UdpSocket::bind(port, host)), sink_(std::move(sink)), logger_(std::move(logger)) {
    thread_ = std::thread([this] { loop(); });
  }

  ~CommandServer() { stop(); }
  CommandServer(const CommandServer&) = delete;
  CommandServer& operator=(const CommandServer&) = delete;

  void stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return socket_.port(); }

  CommandCounters counters() const {
    std::lock_guard lock(mutex_);
    return counters_;
  }

  /// Feeds one datagram through the same path as the socket.
  void handle(const std::string& datagram) {
    std::lock_guard lock(mutex_);
    ++counters_.received;
    protocol::Message msg;
    try {
      msg = protocol::decode(datagram);
    } catch (const protocol::DecodeError& e) {
      ++counters_.malformed;
      if (logger_) logger_(std::string("dropped datagram: ") + e.what());
      return;
    }
    if (auto* wp = std::get_if<protocol::WaypointCommand>(&msg)) {
      auto it = last_stamp_.find(wp->vehicle_id);
      if (it != last_stamp_.end() && wp->t_stamp < it->second) {
        ++counters_.stale;
        return;
      }
      last_stamp_[wp->vehicle_id] = wp->t_stamp;
    } else if (auto* init = std::get_if<protocol::InitMessage>(&msg)) {
      last_stamp_.erase(init->vehicle_id);
    } else if (std::holds_alternative<protocol::ResetCommand>(msg)) {
      last_stamp_.clear();
    }
    ++counters_.delivered;
    sink_(std::move(msg));
  }

 private:
  void loop() {
    while (running_) {
      if (auto datagram = socket_.receive(std::chrono::milliseconds(20))) handle(*datagram);
    }
  }

  UdpSocket socket_;
  Sink sink_;
  Logger logger_;
  mutable std::mutex mutex_;
  CommandCounters counters_;
  std::map<std::int64_t, double> last_stamp_;
  std::atomic<bool> running_{true};
  std::thread thread_;
};

/// Sends encoded messages to a command server.
class CommandClient {
 public:
  CommandClient(const std::string& host, int port)
      : socket_(UdpSocket::sender()), to_(make_address(host, port)) {}

  void send(const protocol::Message& m) const { socket_.send_to(protocol::encode(m), to_); }
  void send_raw(std::string_view bytes) const { socket_.send_to(bytes, to_); }

 private:
  UdpSocket socket_;
  sockaddr_in to_;
};

}  // namespace cosim::net
