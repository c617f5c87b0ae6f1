#pragma once

// Message generators shared by the protocol tests and the acceptance gate.

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cosim/bridge_protocol.hpp"
#include "cosim/harness/simulator.hpp"

namespace samples {

using namespace cosim;
using namespace cosim::protocol;

inline constexpr std::size_t kTypeCount = std::variant_size_v<Message>;

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  double real(double lo = -1e3, double hi = 1e3) {
    // Mix of round values, tiny values and full-precision values.
    switch (pick(6)) {
      case 0: return 0.0;
      case 1: return std::round(std::uniform_real_distribution<double>(lo, hi)(rng_));
      case 2: return std::uniform_real_distribution<double>(lo, hi)(rng_) * 1e-12;
      default: return std::uniform_real_distribution<double>(lo, hi)(rng_);
    }
  }
  double unit(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::int64_t id() { return static_cast<std::int64_t>(pick(4) == 0 ? rng_() >> 2 : pick(1000)); }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  std::string text() {
    static const std::string alphabet =
        "abcXYZ019 _-\"\\/\n\t\r\b\f{}[]:,\x01\x1f";
    std::string s;
    for (std::size_t i = 0, n = pick(12); i < n; ++i) s += alphabet[pick(alphabet.size())];
    return s;
  }

  Message make(std::size_t type) {
    switch (type) {
      case 0: {
        InitMessage m;
        m.vehicle_id = id();
        for (const auto& k : required_params("idm")) m.controller_params[k] = real();
        for (std::size_t i = 0, n = pick(3); i < n; ++i) m.controller_params["extra" + text()] = real();
        m.initial_state = {real(), real(), unit(-kPi, kPi), std::abs(real())};
        m.appearance = text();
        return m;
      }
      case 1: return WaypointCommand{id(), std::abs(real()), real(), real(), unit(-kPi, kPi), std::abs(real())};
      case 2: {
        TransformReport m;
        m.vehicle_id = id();
        m.t_stamp = std::abs(real());
        m.position = {real(), real(), 0.0};
        m.rotation = yaw_to_quaternion(unit(-kPi, kPi));
        return m;
      }
      case 3: return StepCommand{static_cast<std::int64_t>(pick(100000)), static_cast<std::int64_t>(1 + pick(50))};
      case 4: return StepDone{static_cast<std::int64_t>(pick(100000))};
      case 5: {
        Telemetry m;
        m.vehicle_id = id();
        m.t_stamp = std::abs(real());
        m.v = std::abs(real());
        m.yaw_rate = real();
        m.u_d = unit(-1, 1);
        m.steer = real();
        m.handbrake = static_cast<std::int64_t>(pick(2));
        if (m.u_d > 0) m.gas = m.u_d;
        else m.brake = -m.u_d;
        return m;
      }
      case 6: return ResetCommand{};
      case 7: return DespawnCommand{id()};
      case 8: return ManualDrive{id(), unit(-1, 1), unit(-1, 1)};
      case 9: return ReleaseManual{id()};
      case 10: return StartCommand{};
      case 11: return PauseCommand{};
      case 12: return ReplayCommand{};
      case 13: {
        StateFrame m;
        static const char* states[] = {"idle", "running", "paused", "complete"};
        m.state = states[pick(4)];
        m.clock = std::abs(real());
        for (std::size_t i = 0, n = pick(4); i < n; ++i) {
          VehicleFrame v;
          v.vehicle_id = id();
          v.status = text();
          v.t = real(), v.p = real(), v.x = real(), v.y = real(), v.yaw = real(), v.v = real();
          v.u_d = real(), v.steer = real(), v.gas = real(), v.brake = real();
          v.handbrake = static_cast<std::int64_t>(pick(2));
          m.vehicles.push_back(v);
        }
        return m;
      }
      case 14: return Ack{text()};
      default: return ErrorReply{text()};
    }
  }

 private:
  std::mt19937_64 rng_;
};

/// Fixed messages, one per type, used for the golden byte files.
inline std::vector<Message> golden_messages() {
  std::vector<Message> out;
  InitMessage init;
  init.vehicle_id = 3;
  init.controller_params =
      harness::pack_init_params(1, default_params(25), default_stanley_gains(25), default_longitudinal_gains(25));
  init.initial_state = {0.5, 4.3146, -kPi / 2, 0.0};
  init.appearance = "blue";
  out.push_back(init);
  out.push_back(WaypointCommand{1, 0.5, 1.0, 2.0, 0.0, 0.3});
  TransformReport tr;
  tr.vehicle_id = 2;
  tr.t_stamp = 0.01;
  tr.position = {-1.25, 0.1, 0.0};
  tr.rotation = yaw_to_quaternion(kPi / 2);
  out.push_back(tr);
  out.push_back(StepCommand{17, 10});
  out.push_back(StepDone{17});
  out.push_back(Telemetry{4, 1.8, 0.3125, -0.02, -0.6, 0.1, 0.0, 0.0, 1});
  out.push_back(ResetCommand{});
  out.push_back(DespawnCommand{6});
  out.push_back(ManualDrive{1, 0.0, -1.0});
  out.push_back(ReleaseManual{1});
  out.push_back(StartCommand{});
  out.push_back(PauseCommand{});
  out.push_back(ReplayCommand{});
  StateFrame sf;
  sf.state = "running";
  sf.clock = 12.3;
  sf.vehicles.push_back({1, "yielding", 12.3, 2.0207, 0.1, 1.2, -1.5, 0.004, -0.2, 0.01, 0.0, 0.2, 0});
  out.push_back(sf);
  out.push_back(Ack{"manual_drive"});
  out.push_back(ErrorReply{"unknown vehicle 9"});
  return out;
}

inline std::string golden_file(const Message& m) {
  return std::string(COSIM_TEST_DATA_DIR) + "/golden/" + type_name(m) + ".bin";
}

inline std::string read_file(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace samples
