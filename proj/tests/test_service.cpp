#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "una/client.hpp"
#include "una/frame.hpp"
#include "una/service.hpp"

using namespace una;

namespace {

const std::string kScenario = R"(name: svc
seed: 5
arena: {width: 1.25, height: 2.1}
drones:
  - {id: d1, color: [230, 60, 40], pose: [0.2, 1.9, 0.0]}
  - {id: d2, color: [40, 80, 230], pose: [1.0, 0.3, 1.57]}
targets:
  - {id: a, position: [0.3, 0.5]}
  - {id: b, position: [0.95, 1.6]}
stop: {ticks: 100000}
)";

// Testbed stepping in real time behind a live service.
struct Live {
  Testbed testbed;
  Service service;
  std::atomic<bool> stop{false};
  std::thread runner;

  explicit Live(Scenario s, double speed = 1.0) : testbed(std::move(s)), service(testbed) {
    service.start();
    runner = std::thread([this, speed] { run_paced(testbed, stop, speed); });
  }
  ~Live() { halt(); }
  void halt() {
    stop = true;
    if (runner.joinable()) runner.join();
    service.stop();
  }
  Client connect(const std::string& role = {}) { return Client::connect("127.0.0.1", service.port(), role); }
};

Scenario scenario(bool autostart = true) {
  auto s = parse_scenario(kScenario, "svc.yaml");
  s.autostart = autostart;
  return s;
}

std::optional<WireMessage> next_of(Client& c, MessageKind kind, double timeout_s) {
  const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  while (std::chrono::steady_clock::now() < end) {
    auto m = c.receive(0.05);
    if (m && m->kind == kind) return m;
  }
  return std::nullopt;
}

const Json* drone_in(const Json& state, const std::string& id) {
  for (const auto& d : state["drones"])
    if (d["id"] == id) return &d;
  return nullptr;
}

bool wait_state(Client& c, const std::function<bool(const Json&)>& pred, double timeout_s) {
  const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  while (std::chrono::steady_clock::now() < end) {
    auto m = c.receive(0.05);
    if (m && m->kind == MessageKind::kStateUpdate && pred(m->payload)) return true;
  }
  return false;
}

std::string decode_base64(const std::string& in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  int bits = 0, acc = 0;
  for (char c : in) {
    const int v = value(c);
    if (v < 0) continue;
    acc = (acc << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(char((acc >> bits) & 0xFF));
    }
  }
  return out;
}

// Minimal blocking socket for raw HTTP and WebSocket exchanges.
struct Raw {
  int fd;
  explicit Raw(int port) {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(std::uint16_t(port));
    ::inet_pton(AF_INET, "127.0.0.1", &a.sin_addr);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0);
    timeval tv{5, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  }
  ~Raw() { ::close(fd); }
  void write(const std::string& s) { REQUIRE(::send(fd, s.data(), s.size(), MSG_NOSIGNAL) == ssize_t(s.size())); }
  std::string read_exact(std::size_t n) {
    std::string out;
    char buf[4096];
    while (out.size() < n) {
      const ssize_t r = ::recv(fd, buf, std::min(sizeof buf, n - out.size()), 0);
      if (r <= 0) break;
      out.append(buf, std::size_t(r));
    }
    return out;
  }
  std::string read_all() {
    std::string out;
    char buf[4096];
    ssize_t r;
    while ((r = ::recv(fd, buf, sizeof buf, 0)) > 0) out.append(buf, std::size_t(r));
    return out;
  }
  std::string read_headers() {
    std::string out;
    while (out.find("\r\n\r\n") == std::string::npos) {
      const auto c = read_exact(1);
      if (c.empty()) break;
      out += c;
    }
    return out;
  }
  void ws_send(int opcode, const std::string& payload) {
    std::string f;
    f.push_back(char(0x80 | opcode));
    const unsigned char mask[4] = {0x12, 0x34, 0x56, 0x78};
    if (payload.size() < 126) {
      f.push_back(char(0x80 | payload.size()));
    } else {
      f.push_back(char(0x80 | 126));
      f.push_back(char(payload.size() >> 8));
      f.push_back(char(payload.size() & 0xFF));
    }
    f.append(reinterpret_cast<const char*>(mask), 4);
    for (std::size_t i = 0; i < payload.size(); ++i) f.push_back(char(payload[i] ^ mask[i % 4]));
    write(f);
  }
  std::pair<int, std::string> ws_read() {
    const auto head = read_exact(2);
    REQUIRE(head.size() == 2);
    CHECK((head[1] & 0x80) == 0);  // server frames are unmasked
    std::uint64_t len = std::uint8_t(head[1]) & 0x7F;
    if (len >= 126) {
      const auto ext = read_exact(len == 126 ? 2 : 8);
      len = 0;
      for (char c : ext) len = (len << 8) | std::uint8_t(c);
    }
    return {std::uint8_t(head[0]) & 0x0F, read_exact(len)};
  }
};

}  // namespace

TEST_CASE("handshake and a 20 Hz state stream with increasing ids") {
  Live live(scenario());
  auto c = live.connect();
  CHECK(c.connected());
  auto first = next_of(c, MessageKind::kStateUpdate, 2.0);
  REQUIRE(first);
  std::vector<WireMessage> got{*first};
  const auto t0 = std::chrono::steady_clock::now();
  while (std::chrono::steady_clock::now() - t0 < std::chrono::seconds(2))
    if (auto m = c.receive(0.05)) got.push_back(*m);
  std::size_t updates = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i].kind == MessageKind::kStateUpdate) ++updates;
    CHECK(got[i].sender == kCentral);
    if (i > 0) CHECK(got[i].id > got[i - 1].id);
  }
  CHECK(updates >= 36);
  CHECK(updates <= 44);
  const auto& state = got.back().payload;
  for (const char* key : {"time", "tick", "frame", "arena", "camera", "optimizer", "drones", "targets", "covered_count"})
    CHECK(state.contains(key));
  CHECK(live.service.connections() == 1);
}

TEST_CASE("version mismatch is refused with a reason") {
  Live live(scenario());
  try {
    Client::connect("127.0.0.1", live.service.port(), {}, "una/2");
    FAIL("connected with the wrong version");
  } catch (const ClientError& e) {
    CHECK(std::string(e.what()) == "handshake refused: unsupported protocol version 'una/2', expected una/1");
  }
  CHECK_THROWS_AS(Client::connect("127.0.0.1", live.service.port(), "spectator"), ClientError);
}

TEST_CASE("malformed and unexpected messages get a FAULT and the connection stays up") {
  Live live(scenario());
  auto c = live.connect();
  c.send_line("{this is not json");
  auto f = next_of(c, MessageKind::kFault, 2.0);
  REQUIRE(f);
  CHECK(f->payload["reason"].get<std::string>().rfind("malformed message:", 0) == 0);

  c.send_line(R"({"id":9,"kind":"MANUAL_CMD","payload":{"drone":"d1"}})");
  f = next_of(c, MessageKind::kFault, 2.0);
  REQUIRE(f);
  CHECK(f->payload["reason"] == "malformed message: MANUAL_CMD needs exactly one of 'goal', 'command', 'release'");

  const auto id = c.send(MessageKind::kStateUpdate, Json::object());
  auto r = c.await_reply(id, 2.0);
  REQUIRE(r);
  CHECK(r->kind == MessageKind::kFault);
  CHECK(r->payload["reason"] == "STATE_UPDATE is not accepted from clients");

  const auto bad = c.send(MessageKind::kSetObjectives, objectives_payload({{"ghost", Pose2D(0.5, 0.5, 0)}}));
  r = c.await_reply(bad, 2.0);
  REQUIRE(r);
  CHECK(r->kind == MessageKind::kFault);
  CHECK(r->payload["reason"] == "unknown drone 'ghost'");

  CHECK(c.connected());
  CHECK(next_of(c, MessageKind::kStateUpdate, 1.0));
}

TEST_CASE("objectives, takeoff and emergency stop over the wire") {
  Live live(scenario(false), 4.0);
  auto c = live.connect();
  auto r = c.await_reply(c.send(MessageKind::kTakeoff), 2.0);
  REQUIRE(r);
  CHECK(r->kind == MessageKind::kAck);
  CHECK(wait_state(
      c, [](const Json& s) { return (*drone_in(s, "d1"))["flight"] == "FLYING" && (*drone_in(s, "d2"))["flight"] == "FLYING"; },
      5.0));

  r = c.await_reply(c.send(MessageKind::kManualCmd, {{"drone", "d1"}, {"goal", to_json(Pose2D(0.6, 1.0, 0.0))}}), 2.0);
  REQUIRE(r);
  CHECK(r->kind == MessageKind::kAck);
  CHECK(wait_state(c, [](const Json& s) { return (*drone_in(s, "d1"))["phase"] != "IDLE"; }, 3.0));
  CHECK(wait_state(c, [](const Json& s) { return (*drone_in(s, "d1"))["manual"] == true; }, 3.0));

  r = c.await_reply(c.send(MessageKind::kEmergencyStop), 2.0);
  REQUIRE(r);
  CHECK(r->kind == MessageKind::kAck);
  CHECK(wait_state(
      c,
      [](const Json& s) {
        for (const auto& d : s["drones"])
          if (d["flight"] != "LANDED") return false;
        return s["halted"] == true;
      },
      5.0));
}

TEST_CASE("a plain SET_OBJECTIVES is acknowledged with what was applied") {
  Live live(scenario(), 4.0);
  auto c = live.connect();
  CHECK(wait_state(c, [](const Json& s) { return (*drone_in(s, "d2"))["flight"] == "FLYING"; }, 5.0));
  const auto r = c.await_reply(c.send(MessageKind::kSetObjectives, objectives_payload({{"d2", Pose2D(0.9, 0.8, 1.0)}})), 2.0);
  REQUIRE(r);
  CHECK(r->kind == MessageKind::kAck);
  CHECK(r->payload["applied"] == Json::array({"d2"}));
  CHECK(wait_state(c, [](const Json& s) { return (*drone_in(s, "d2"))["phase"] != "IDLE"; }, 3.0));
}

TEST_CASE("FRAME_REQUEST returns one PPM frame") {
  Live live(scenario());
  auto c = live.connect();
  REQUIRE(next_of(c, MessageKind::kStateUpdate, 2.0));
  const auto r = c.await_reply(c.send(MessageKind::kFrameRequest), 5.0);
  REQUIRE(r);
  REQUIRE(r->kind == MessageKind::kAck);
  CHECK(r->payload["format"] == "ppm");
  CHECK(r->payload["encoding"] == "base64");
  const Frame f = decode_ppm(decode_base64(r->payload["data"].get<std::string>()));
  CHECK(f.width() == 500);
  CHECK(f.height() == 840);
  CHECK(r->payload["width"] == 500);
}

TEST_CASE("plain HTTP gets an index page or 404") {
  Live live(scenario());
  {
    Raw s(live.service.port());
    s.write("GET / HTTP/1.1\r\nHost: x\r\n\r\n");
    const auto resp = s.read_all();
    CHECK(resp.rfind("HTTP/1.1 200 OK", 0) == 0);
    CHECK(resp.find("/ws") != std::string::npos);
  }
  {
    Raw s(live.service.port());
    s.write("GET /secret HTTP/1.1\r\nHost: x\r\n\r\n");
    CHECK(s.read_all().rfind("HTTP/1.1 404", 0) == 0);
  }
}

TEST_CASE("WebSocket clients speak the same protocol") {
  Live live(scenario());
  Raw s(live.service.port());
  s.write("GET /ws HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
          "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
  const auto headers = s.read_headers();
  CHECK(headers.rfind("HTTP/1.1 101", 0) == 0);
  CHECK(headers.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=") != std::string::npos);

  s.ws_send(1, "una/1");
  auto [op, text] = s.ws_read();
  CHECK(op == 1);
  CHECK(text == "una/1");

  bool saw_state = false;
  for (int i = 0; i < 5 && !saw_state; ++i) {
    auto [o, t] = s.ws_read();
    saw_state = o == 1 && decode(t).kind == MessageKind::kStateUpdate;
  }
  CHECK(saw_state);

  s.ws_send(9, "hi");
  bool pong = false;
  for (int i = 0; i < 20 && !pong; ++i) {
    auto [o, t] = s.ws_read();
    pong = o == 10 && t == "hi";
  }
  CHECK(pong);

  s.ws_send(1, encode({1, MessageKind::kTakeoff, "ui", Json::object()}));
  bool acked = false;
  for (int i = 0; i < 40 && !acked; ++i) {
    auto [o, t] = s.ws_read();
    const auto m = decode(t);
    acked = m.kind == MessageKind::kAck && m.payload["ref"] == 1;
  }
  CHECK(acked);

  s.ws_send(8, std::string("\x03\xe8", 2));
  bool closed = false;
  for (int i = 0; i < 40 && !closed; ++i) closed = s.ws_read().first == 8;
  CHECK(closed);
}

TEST_CASE("an optimizer plugin plans over the wire") {
  auto s = scenario();
  s.optimizer.external = true;
  Live live(s, 4.0);
  auto plugin = live.connect("optimizer");
  std::atomic<bool> stop{false};
  int answered = 0;
  std::thread worker([&] { answered = serve_plugin(plugin, greedy_plan, stop); });
  const auto end = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (std::chrono::steady_clock::now() < end && answered == 0 && live.testbed.plugin_timeouts() == 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  live.halt();
  stop = true;
  worker.join();
  REQUIRE(!live.testbed.plans().empty());
  const auto& first = live.testbed.plans().front();
  CHECK(first.from_plugin);
  CHECK(!first.timed_out);
  CHECK(first.objectives == greedy_plan(first.instance));
  CHECK(first.objectives.size() == 2);
  CHECK(live.testbed.plugin_timeouts() == 0);
}

TEST_CASE("a silent optimizer times out and the last objectives stay") {
  auto s = scenario();
  s.optimizer.external = true;
  Live live(s, 4.0);
  auto plugin = live.connect("optimizer");
  const auto end = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  std::optional<WireMessage> request;
  while (std::chrono::steady_clock::now() < end && !request) {
    auto m = plugin.receive(0.05);
    if (m && m->kind == MessageKind::kStateUpdate && m->payload.contains("request")) request = m;
  }
  REQUIRE(request);
  CHECK(request->payload.contains("instance"));
  while (std::chrono::steady_clock::now() < end && live.testbed.plugin_timeouts() == 0)
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  CHECK(live.testbed.plugin_timeouts() >= 1);

  // A reply after the deadline is acknowledged as stale.
  Json late = objectives_payload({{"d1", Pose2D(0.5, 0.5, 0)}});
  late["request"] = request->payload["request"];
  const auto r = plugin.await_reply(plugin.send(MessageKind::kSetObjectives, late), 2.0);
  REQUIRE(r);
  CHECK(r->kind == MessageKind::kAck);
  CHECK(r->payload["stale"] == true);
  live.halt();
  CHECK(!live.testbed.objective("d1"));
}

TEST_CASE("UNA_PORT overrides the default port") {
  ::unsetenv("UNA_PORT");
  CHECK(default_port() == kDefaultPort);
  ::setenv("UNA_PORT", "9123", 1);
  CHECK(default_port() == 9123);
  ::setenv("UNA_PORT", "http", 1);
  CHECK(default_port() == kDefaultPort);
  ::unsetenv("UNA_PORT");
}
