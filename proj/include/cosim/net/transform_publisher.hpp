#pragma once

// Stream egress: newline-delimited messages broadcast to every connected TCP
// subscriber. Publishing only appends to per-subscriber buffers, so the
// caller never waits on the network; a subscriber whose buffer exceeds the
// cap is disconnected.

#include <atomic>
#include <condition_variable>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>

#include "cosim/bridge_protocol.hpp"
#include "cosim/net/socket.hpp"

namespace cosim::net {

inline constexpr int kDefaultStreamPort = 9871;
inline constexpr std::size_t kDefaultEgressLimit = 1 << 20;

/// Connected clients with bounded outbound buffers and a writer thread.
class ClientSet {
 public:
  struct Client {
    int id = 0;
    TcpStream stream;
    std::string out;
    bool dead = false;
  };

  explicit ClientSet(std::size_t egress_limit = kDefaultEgressLimit) : limit_(egress_limit) {
    writer_ = std::thread([this] { write_loop(); });
  }
  ~ClientSet() { stop(); }

  void stop() {
    {
      std::lock_guard lock(mutex_);
      if (!running_) return;
      running_ = false;
    }
    cv_.notify_all();
    if (writer_.joinable()) writer_.join();
    std::lock_guard lock(mutex_);
    for (auto& c : clients_) c->stream.shutdown();
    clients_.clear();
  }

  std::shared_ptr<Client> add(TcpStream stream) {
    auto c = std::make_shared<Client>();
    c->stream = std::move(stream);
    std::lock_guard lock(mutex_);
    c->id = next_id_++;
    clients_.push_back(c);
    return c;
  }

  void broadcast(std::string_view bytes) {
    {
      std::lock_guard lock(mutex_);
      for (auto& c : clients_) enqueue(*c, bytes);
    }
    cv_.notify_all();
  }

  void send_to(int id, std::string_view bytes) {
    {
      std::lock_guard lock(mutex_);
      for (auto& c : clients_) {
        if (c->id == id) enqueue(*c, bytes);
      }
    }
    cv_.notify_all();
  }

  void drop(int id) {
    std::lock_guard lock(mutex_);
    for (auto& c : clients_) {
      if (c->id == id) c->dead = true;
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& c : clients_) n += c->dead ? 0 : 1;
    return n;
  }

  std::size_t disconnected_slow() const {
    std::lock_guard lock(mutex_);
    return slow_drops_;
  }

  /// Waits until every buffer has been written out.
  bool flush(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      {
        std::lock_guard lock(mutex_);
        bool empty = true;
        for (const auto& c : clients_) empty = empty && (c->dead || c->out.empty());
        if (empty) return true;
      }
      cv_.notify_all();
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    return false;
  }

 private:
  void enqueue(Client& c, std::string_view bytes) {
    if (c.dead) return;
    if (c.out.size() + bytes.size() > limit_) {
      c.dead = true;
      ++slow_drops_;
      return;
    }
    c.out.append(bytes);
  }

  void write_loop() {
    std::unique_lock lock(mutex_);
    while (running_) {
      bool pending = false;
      for (auto it = clients_.begin(); it != clients_.end();) {
        Client& c = **it;
        if (!c.dead && !c.out.empty()) {
          const ssize_t n = c.stream.send_some(c.out);
          if (n < 0) {
            c.dead = true;
          } else {
            c.out.erase(0, static_cast<std::size_t>(n));
            pending = pending || !c.out.empty();
          }
        }
        if (c.dead) {
          c.stream.shutdown();
          it = clients_.erase(it);
        } else {
          ++it;
        }
      }
      cv_.wait_for(lock, std::chrono::milliseconds(pending ? 1 : 20));
    }
  }

  std::size_t limit_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::list<std::shared_ptr<Client>> clients_;
  int next_id_ = 1;
  std::size_t slow_drops_ = 0;
  bool running_ = true;
  std::thread writer_;
};

/// TCP listener feeding a ClientSet; carries TransformReports and the other
/// simulator-to-mainframe messages.
class StreamPublisher {
 public:
  explicit StreamPublisher(int port, const std::string& host = "127.0.0.1",
                           std::size_t egress_limit = kDefaultEgressLimit)
      : listener_(TcpListener::bind(port, host)), clients_(egress_limit) {
    acceptor_ = std::thread([this] { accept_loop(); });
  }
  ~StreamPublisher() { stop(); }
  StreamPublisher(const StreamPublisher&) = delete;
  StreamPublisher& operator=(const StreamPublisher&) = delete;

  void stop() {
    running_ = false;
    if (acceptor_.joinable()) acceptor_.join();
    clients_.stop();
  }

  int port() const { return listener_.port(); }
  std::size_t subscribers() const { return clients_.size(); }
  std::size_t disconnected_slow() const { return clients_.disconnected_slow(); }
  bool flush(std::chrono::milliseconds timeout) { return clients_.flush(timeout); }

  /// Waits until at least n subscribers are connected.
  bool wait_for_subscribers(std::size_t n, std::chrono::milliseconds timeout) const {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (subscribers() < n) {
      if (std::chrono::steady_clock::now() >= deadline) return false;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    return true;
  }

  void publish(std::string_view encoded) { clients_.broadcast(encoded); }

  /// One physics tick worth of reports, sent as a single contiguous group.
  void publish_tick(std::span<const protocol::TransformReport> reports) {
    std::string batch;
    for (const auto& r : reports) batch += protocol::encode(r);
    clients_.broadcast(batch);
  }

 private:
  void accept_loop() {
    while (running_) {
      if (auto s = listener_.accept(std::chrono::milliseconds(20))) clients_.add(std::move(*s));
    }
  }

  TcpListener listener_;
  ClientSet clients_;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
};

}  // namespace cosim::net
