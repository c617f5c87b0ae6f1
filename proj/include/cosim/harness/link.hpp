#pragma once

// Mainframe-side connections to a simulator. The in-process link calls the
// simulator directly; the networked link speaks the bridge protocol over a
// datagram command channel and a TCP report stream. Both carry the same
// message values, so a scenario produces the same log either way.

#include <chrono>
#include <map>
#include <memory>
#include <random>
#include <thread>

#include "cosim/harness/simulator.hpp"
#include "cosim/net/bounded_queue.hpp"
#include "cosim/net/command_server.hpp"
#include "cosim/net/transform_publisher.hpp"

namespace cosim::harness {

class SimulatorUnreachable : public net::NetworkError {
 public:
  using NetworkError::NetworkError;
};

class SimulatorLink {
 public:
  virtual ~SimulatorLink() = default;
  virtual void send(const protocol::Message& message) = 0;
  /// Runs `steps` physics ticks for planner tick `tick` and returns the
  /// reports of the final physics tick.
  virtual TickReports step(std::int64_t tick, int steps) = 0;
};

class InProcessLink : public SimulatorLink {
 public:
  /// `publisher` optionally mirrors every physics tick onto a report stream.
  explicit InProcessLink(Simulator& sim, net::StreamPublisher* publisher = nullptr)
      : sim_(sim), publisher_(publisher) {}

  void send(const protocol::Message& message) override { sim_.apply(message); }

  TickReports step(std::int64_t, int steps) override {
    TickReports last;
    for (int i = 0; i < steps; ++i) {
      last = sim_.step();
      if (publisher_) publisher_->publish_tick(last.transforms);
    }
    return last;
  }

 private:
  Simulator& sim_;
  net::StreamPublisher* publisher_;
};

/// Drops a fraction of waypoint commands before they reach the wrapped link.
class LossyLink : public SimulatorLink {
 public:
  LossyLink(SimulatorLink& inner, double drop_probability, std::uint64_t seed)
      : inner_(inner), drop_(drop_probability), rng_(seed) {}

  void send(const protocol::Message& message) override {
    if (std::holds_alternative<protocol::WaypointCommand>(message) && drop_(rng_)) {
      ++dropped_;
      return;
    }
    inner_.send(message);
  }

  TickReports step(std::int64_t tick, int steps) override { return inner_.step(tick, steps); }
  std::size_t dropped() const { return dropped_; }

 private:
  SimulatorLink& inner_;
  std::bernoulli_distribution drop_;
  std::mt19937_64 rng_;
  std::size_t dropped_ = 0;
};

struct NetworkLinkOptions {
  std::string host = "127.0.0.1";
  int command_port = net::kDefaultCommandPort;
  int stream_port = net::kDefaultStreamPort;
  std::chrono::milliseconds retry_interval{200};
  std::chrono::milliseconds step_timeout{10000};
  std::chrono::milliseconds connect_timeout{5000};
};

class NetworkLink : public SimulatorLink {
 public:
  explicit NetworkLink(NetworkLinkOptions options = {})
      : options_(options), commands_(options.host, options.command_port) {
    try {
      stream_ = net::TcpStream::connect(options.host, options.stream_port, options.connect_timeout);
    } catch (const net::NetworkError& e) {
      throw SimulatorUnreachable(e.what());
    }
  }

  void send(const protocol::Message& message) override { commands_.send(message); }

  TickReports step(std::int64_t tick, int steps) override {
    const protocol::StepCommand cmd{tick, steps};
    commands_.send(cmd);
    std::map<std::int64_t, protocol::TransformReport> transforms;
    std::map<std::int64_t, protocol::Telemetry> telemetry;
    const auto deadline = std::chrono::steady_clock::now() + options_.step_timeout;
    auto resend_at = std::chrono::steady_clock::now() + options_.retry_interval;
    for (;;) {
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) {
        throw SimulatorUnreachable("no step_done for tick " + std::to_string(tick));
      }
      if (now >= resend_at) {
        commands_.send(cmd);
        resend_at = now + options_.retry_interval;
      }
      std::optional<std::string> line;
      try {
        line = stream_.read_line(std::chrono::milliseconds(20));
      } catch (const net::NetworkError& e) {
        throw SimulatorUnreachable(e.what());
      }
      if (!line) continue;
      protocol::Message msg;
      try {
        msg = protocol::decode(*line);
      } catch (const protocol::DecodeError&) {
        continue;
      }
      if (auto* tr = std::get_if<protocol::TransformReport>(&msg)) {
        transforms[tr->vehicle_id] = *tr;
      } else if (auto* tel = std::get_if<protocol::Telemetry>(&msg)) {
        telemetry[tel->vehicle_id] = *tel;
      } else if (auto* done = std::get_if<protocol::StepDone>(&msg); done && done->tick == tick) {
        TickReports out;
        for (auto& [id, t] : telemetry) {
          auto it = transforms.find(id);
          // Only reports from the final physics tick of this step count.
          if (it == transforms.end() || it->second.t_stamp != t.t_stamp) continue;
          out.transforms.push_back(it->second);
          out.telemetry.push_back(t);
        }
        return out;
      }
    }
  }

 private:
  NetworkLinkOptions options_;
  net::CommandClient commands_;
  net::TcpStream stream_;
};

/// Hosts a Simulator behind the command and stream sockets.
class SimulatorServer {
 public:
  SimulatorServer(std::vector<Path> paths, double physics_dt, int command_port = net::kDefaultCommandPort,
                  int stream_port = net::kDefaultStreamPort, const std::string& host = "127.0.0.1")
      : sim_(std::move(paths), physics_dt),
        publisher_(stream_port, host),
        commands_(command_port, [this](protocol::Message m) { inbox_.push(std::move(m)); }, host) {
    worker_ = std::thread([this] { loop(); });
  }
  ~SimulatorServer() { stop(); }
  SimulatorServer(const SimulatorServer&) = delete;
  SimulatorServer& operator=(const SimulatorServer&) = delete;

  void stop() {
    running_ = false;
    if (worker_.joinable()) worker_.join();
    commands_.stop();
    publisher_.stop();
  }

  int command_port() const { return commands_.port(); }
  int stream_port() const { return publisher_.port(); }
  net::CommandCounters counters() const { return commands_.counters(); }
  std::int64_t ticks_run() const { return ticks_run_; }

 private:
  void loop() {
    while (running_) {
      auto msg = inbox_.pop(std::chrono::milliseconds(20));
      if (!msg) continue;
      if (auto* step = std::get_if<protocol::StepCommand>(&*msg)) {
        if (step->tick > last_tick_) {
          last_tick_ = step->tick;
          TickReports reports;
          for (std::int64_t i = 0; i < step->steps; ++i) {
            reports = sim_.step();
            publisher_.publish_tick(reports.transforms);
            ++ticks_run_;
          }
          std::string tail;
          for (const auto& tel : reports.telemetry) tail += protocol::encode(tel);
          tail += protocol::encode(protocol::StepDone{step->tick});
          cached_.clear();
          for (const auto& tr : reports.transforms) cached_ += protocol::encode(tr);
          cached_ += tail;
          publisher_.publish(tail);
        } else if (step->tick == last_tick_) {
          // A retried step: repeat the final reports without advancing.
          publisher_.publish(cached_);
        }
        continue;
      }
      if (std::holds_alternative<protocol::ResetCommand>(*msg)) {
        last_tick_ = -1;
        cached_.clear();
      }
      try {
        sim_.apply(*msg);
      } catch (const Error&) {
        // A bad init or parameter set is dropped like a malformed datagram.
      } catch (const std::out_of_range&) {
      }
    }
  }

  Simulator sim_;
  net::StreamPublisher publisher_;
  net::BoundedQueue<protocol::Message> inbox_;
  net::CommandServer commands_;
  std::atomic<bool> running_{true};
  std::int64_t last_tick_ = -1;
  std::string cached_;
  std::atomic<std::int64_t> ticks_run_{0};
  std::thread worker_;
};

}  // namespace cosim::harness
