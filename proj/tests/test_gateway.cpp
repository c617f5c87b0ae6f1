#include <gtest/gtest.h>

#include <mutex>

#include "cosim/harness/gateway.hpp"
#include "cosim/net/websocket.hpp"

using namespace cosim;
using namespace cosim::harness;
using namespace std::chrono_literals;

namespace {

struct Recorder {
  std::mutex mutex;
  std::vector<protocol::Message> accepted;

  Gateway::Handler handler() {
    return [this](const protocol::Message& m) -> std::optional<std::string> {
      if (auto* d = std::get_if<protocol::ManualDrive>(&m); d && d->vehicle_id == 9) return "unknown vehicle 9";
      std::lock_guard lock(mutex);
      accepted.push_back(m);
      return std::nullopt;
    };
  }
  std::vector<protocol::Message> snapshot() {
    std::lock_guard lock(mutex);
    return accepted;
  }
};

protocol::StateFrame frame() {
  protocol::StateFrame f;
  f.state = "running";
  f.clock = 1.5;
  f.vehicles.push_back({1, "driving", 1.5, 2.0, 0.1, 1.2, -1.5, 0.3, 0.1, 0.0, 0.4, 0.0, 0});
  return f;
}

/// Next reply that is not a periodic state frame.
protocol::Message next_reply(net::ws::Client& c) {
  for (int i = 0; i < 100; ++i) {
    const auto text = c.read_text(2000ms);
    if (!text) break;
    auto m = protocol::decode(*text);
    if (!std::holds_alternative<protocol::StateFrame>(m)) return m;
  }
  throw std::runtime_error("no reply");
}

}  // namespace

TEST(Gateway, HandshakeAndStateFrames) {
  Recorder rec;
  Gateway gw(0, rec.handler(), frame, 50ms);
  auto client = net::ws::Client::connect("127.0.0.1", gw.port());
  const auto start = std::chrono::steady_clock::now();
  int frames = 0;
  while (std::chrono::steady_clock::now() - start < 1s) {
    const auto text = client.read_text(500ms);
    ASSERT_TRUE(text);
    const auto m = protocol::decode(*text);
    ASSERT_EQ(std::get<protocol::StateFrame>(m), frame());
    ++frames;
  }
  EXPECT_GE(frames, 10);
  EXPECT_EQ(gw.clients(), 1u);
}

TEST(Gateway, AcksOperatorCommands) {
  Recorder rec;
  Gateway gw(0, rec.handler(), frame, 50ms);
  auto client = net::ws::Client::connect("127.0.0.1", gw.port());
  const std::vector<protocol::Message> cmds{protocol::StartCommand{}, protocol::PauseCommand{},
                                            protocol::ManualDrive{1, 0.0, -1.0}, protocol::ReleaseManual{1},
                                            protocol::ResetCommand{}};
  for (const auto& cmd : cmds) {
    std::string text = protocol::encode(cmd);
    text.pop_back();
    ASSERT_TRUE(client.send_text(text));
    EXPECT_EQ(std::get<protocol::Ack>(next_reply(client)).command, protocol::type_name(cmd));
  }
  EXPECT_EQ(rec.snapshot(), cmds);
}

TEST(Gateway, RejectsBadInput) {
  Recorder rec;
  Gateway gw(0, rec.handler(), frame, 50ms);
  auto client = net::ws::Client::connect("127.0.0.1", gw.port());
  client.send_text(protocol::encode(protocol::ManualDrive{9, 0.0, 0.5}));
  EXPECT_EQ(std::get<protocol::ErrorReply>(next_reply(client)).message, "unknown vehicle 9");
  client.send_text(protocol::encode(protocol::WaypointCommand{1, 0.1, 0, 0, 0, 0}));
  EXPECT_NE(std::get<protocol::ErrorReply>(next_reply(client)).message.find("not an operator command"),
            std::string::npos);
  client.send_text("{\"type\":\"manual_drive\",\"vehicle_id\":1,\"steer\":3,\"throttle\":0}");
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(next_reply(client)));
  client.send_text("not json");
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(next_reply(client)));
  client.send_frame("\x01\x02", net::ws::Opcode::binary);
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(next_reply(client)));
  EXPECT_TRUE(rec.snapshot().empty());
  // The connection survives every rejection.
  client.send_text(protocol::encode(protocol::StartCommand{}));
  EXPECT_TRUE(std::holds_alternative<protocol::Ack>(next_reply(client)));
}

TEST(Gateway, MultipleClientsAndDisconnect) {
  Recorder rec;
  Gateway gw(0, rec.handler(), frame, 20ms);
  {
    auto a = net::ws::Client::connect("127.0.0.1", gw.port());
    auto b = net::ws::Client::connect("127.0.0.1", gw.port());
    ASSERT_TRUE(a.read_text(1000ms));
    ASSERT_TRUE(b.read_text(1000ms));
    EXPECT_EQ(gw.clients(), 2u);
  }
  const auto deadline = std::chrono::steady_clock::now() + 3s;
  while (gw.clients() > 0 && std::chrono::steady_clock::now() < deadline) std::this_thread::sleep_for(10ms);
  EXPECT_EQ(gw.clients(), 0u);
  EXPECT_GT(gw.frames_sent(), 0u);
}

TEST(Gateway, RejectsPlainHttp) {
  Recorder rec;
  Gateway gw(0, rec.handler(), frame, 50ms);
  auto s = net::TcpStream::connect("127.0.0.1", gw.port());
  ASSERT_TRUE(s.send_all("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
  const auto line = s.read_line(2000ms);
  ASSERT_TRUE(line);
  EXPECT_NE(line->find("400"), std::string::npos);
}

TEST(Gateway, BroadcastReachesClients) {
  Recorder rec;
  Gateway gw(0, rec.handler(), nullptr);
  auto client = net::ws::Client::connect("127.0.0.1", gw.port());
  const auto deadline = std::chrono::steady_clock::now() + 2s;
  while (gw.clients() == 0 && std::chrono::steady_clock::now() < deadline) std::this_thread::sleep_for(5ms);
  gw.broadcast(protocol::Ack{"hello"});
  const auto text = client.read_text(2000ms);
  ASSERT_TRUE(text);
  EXPECT_EQ(std::get<protocol::Ack>(protocol::decode(*text)).command, "hello");
}
