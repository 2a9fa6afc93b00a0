#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "una/testbed.hpp"

using namespace una;

namespace {

constexpr double kPi = std::numbers::pi;

const std::string kTwoDrones = R"(name: pair
seed: 11
arena: {width: 1.25, height: 2.1}
drones:
  - {id: d1, color: [230, 60, 40], pose: [0.2, 1.9, 0.0]}
  - {id: d2, color: [40, 80, 230], pose: [1.0, 0.3, 1.57]}
targets:
  - {id: a, position: [0.3, 0.5]}
  - {id: b, position: [0.5, 0.6]}
  - {id: c, position: [0.95, 1.6]}
  - {id: d, position: [1.1, 1.8]}
optimizer: {mode: central}
mesh: {range: 2.5}
stop: {ticks: 1000}
)";

Scenario two_drones(OptimizerMode mode, ControlMode control = ControlMode::kAutopilot) {
  auto s = parse_scenario(kTwoDrones, "pair.yaml");
  s.optimizer.mode = mode;
  for (auto& d : s.drones) d.mode = control;
  return s;
}

Scenario case_study() { return load_scenario(std::filesystem::path(UNA_SOURCE_DIR) / "scenarios/case_study.yaml"); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Reply send(Testbed& tb, MessageKind kind, Json payload) {
  static std::uint64_t id = 0;
  auto f = tb.submit({++id, kind, "test", std::move(payload)});
  tb.step();
  return f.get();
}

void run_until(Testbed& tb, const std::function<bool()>& done, int max_ticks) {
  for (int i = 0; i < max_ticks && !done(); ++i) tb.step();
}

bool flying(const Testbed& tb, const std::string& id) {
  return tb.world().find_drone(id)->phase == FlightPhase::kFlying;
}

const ControlTraceRow& last_row(const Testbed& tb, const std::string& id) {
  const auto& trace = tb.control_trace();
  for (auto it = trace.rbegin(); it != trace.rend(); ++it)
    if (it->drone == id) return *it;
  throw std::logic_error("no trace row");
}

}  // namespace

TEST_CASE("scenario errors name the file, line and entry") {
  const std::string base = "arena: {width: 1.25, height: 2.1}\ndrones:\n";
  auto error_of = [](const std::string& yaml) -> std::string {
    try {
      parse_scenario(yaml, "bad.yaml");
    } catch (const ScenarioError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(error_of(base + "  - {id: d1, color: [230, 60, 40], pose: [0.2, 1.9, 0]}\n"
                        "  - {id: d2, color: [40, 80, 230], pose: [2.0, 0.5, 0]}\n") ==
        "bad.yaml:4: drone 'd2' starts outside the arena");
  CHECK(error_of(base + "  - {id: d1, color: [230, 60, 40], pose: [0.2, 1.9, 0]}\n"
                        "  - {id: d1, color: [40, 80, 230], pose: [0.5, 0.5, 0]}\n") ==
        "bad.yaml:4: duplicate drone id 'd1'");
  CHECK(error_of(base + "  - {id: d1, color: [230, 60, 40], pose: [0.2, 1.9, 0]}\n"
                        "  - {id: d2, color: [240, 90, 40], pose: [0.5, 0.5, 0]}\n") ==
        "bad.yaml:4: drone 'd2' color is too close to drone 'd1'");
  CHECK(error_of(base + "  - {id: d1, color: [200, 40, 200], pose: [0.2, 1.9, 0]}\n") ==
        "bad.yaml:3: drone 'd1' color is too close to the target color");
  CHECK(error_of(base + "  - {id: d1, color: [230, 60, 40], pose: [0.2, 1.9, 0], mode: manual}\n") ==
        "bad.yaml:3: drone 'd1' mode must be autopilot or remote");
  CHECK(error_of(base + "  - {id: d1, color: [230, 60, 40], pose: [0.2, 1.9, 0]}\n"
                        "targets:\n  - {id: t, script: [[0, 0.5, 0.5], [10, 3.0, 0.5]]}\n") ==
        "bad.yaml:5: target 't' leaves the arena");
  CHECK(error_of("drones: [\n") .rfind("bad.yaml:", 0) == 0);
  CHECK(error_of("arena: {width: 1.0, height: 1.0}\n") == "bad.yaml:1: 'drones' must be a list");
  CHECK_THROWS_WITH_AS(load_scenario("/nonexistent.yaml"), "/nonexistent.yaml: cannot open", ScenarioError);
}

TEST_CASE("the bundled case study parses") {
  const auto s = case_study();
  CHECK(s.name == "case-study");
  CHECK(s.drones.size() == 1);
  CHECK(s.targets.size() == 2);
  CHECK(s.optimizer.camera.fov == doctest::Approx(93 * kPi / 180));
  CHECK(s.stop.ticks == 3000);
}

TEST_CASE("client messages take effect on the next tick") {
  auto s = two_drones(OptimizerMode::kCentral, ControlMode::kRemote);
  s.autostart = false;
  s.stop.ticks = 400;
  Testbed tb(s);

  SUBCASE("takeoff then goal leaves IDLE") {
    CHECK(send(tb, MessageKind::kTakeoff, {{"drone", "d1"}}).ok);
    CHECK(last_row(tb, "d1").command.kind == AtCommand::Kind::kTakeoff);
    run_until(tb, [&] { return flying(tb, "d1"); }, 200);
    REQUIRE(flying(tb, "d1"));
    CHECK(!flying(tb, "d2"));
    const auto r = send(tb, MessageKind::kSetObjectives, objectives_payload({{"d1", Pose2D(0.6, 1.0, 0)}}));
    CHECK(r.ok);
    CHECK(r.extra["applied"] == Json::array({"d1"}));
    run_until(tb, [&] { return tb.phase("d1") != ControlPhase::kIdle; }, 10);
    CHECK(tb.phase("d1") != ControlPhase::kIdle);
  }

  SUBCASE("operator command beats the remote stream") {
    send(tb, MessageKind::kTakeoff, Json::object());
    run_until(tb, [&] { return flying(tb, "d1") && flying(tb, "d2"); }, 200);
    send(tb, MessageKind::kManualCmd, {{"drone", "d1"}, {"goal", to_json(Pose2D(0.6, 1.0, 0))}});
    for (int i = 0; i < 10; ++i) tb.step();
    const auto before = last_row(tb, "d1").command;
    CHECK(before.kind == AtCommand::Kind::kProgressive);
    const auto cmd = AtCommand::progressive(0.0, 0.0, 0.7, 0.0);
    CHECK(send(tb, MessageKind::kManualCmd, {{"drone", "d1"}, {"command", to_json(cmd)}}).ok);
    CHECK(last_row(tb, "d1").command == cmd);
    tb.step();
    CHECK(last_row(tb, "d1").command.gaz != 0.7);
  }

  SUBCASE("emergency stop lands every drone on the next tick") {
    send(tb, MessageKind::kTakeoff, Json::object());
    run_until(tb, [&] { return flying(tb, "d1") && flying(tb, "d2"); }, 200);
    send(tb, MessageKind::kSetObjectives, objectives_payload({{"d1", Pose2D(0.6, 1.0, 0)}, {"d2", Pose2D(0.9, 0.5, 1)}}));
    for (int i = 0; i < 5; ++i) tb.step();
    CHECK(send(tb, MessageKind::kEmergencyStop, Json::object()).ok);
    CHECK(last_row(tb, "d1").command.kind == AtCommand::Kind::kLand);
    CHECK(last_row(tb, "d2").command.kind == AtCommand::Kind::kLand);
    for (int i = 0; i < 100; ++i) tb.step();
    for (const auto& d : tb.world().drones) CHECK(d.phase == FlightPhase::kLanded);
    CHECK(!tb.objective("d1"));
    CHECK(tb.phase("d1") == ControlPhase::kIdle);
  }

  SUBCASE("rejections name the problem") {
    auto r = send(tb, MessageKind::kSetObjectives, objectives_payload({{"zz", Pose2D(0.6, 1.0, 0)}}));
    CHECK(!r.ok);
    CHECK(r.reason == "unknown drone 'zz'");
    r = send(tb, MessageKind::kSetObjectives, objectives_payload({{"d1", Pose2D(3.0, 1.0, 0)}}));
    CHECK(r.reason == "goal for 'd1' is outside the arena");
    r = send(tb, MessageKind::kStateUpdate, Json::object());
    CHECK(r.reason == "STATE_UPDATE is not accepted from clients");
    r = send(tb, MessageKind::kLand, {{"drone", "nope"}});
    CHECK(r.reason == "unknown drone 'nope'");
  }
}

TEST_CASE("manual goal overrides the optimizer until released") {
  auto s = two_drones(OptimizerMode::kCentral);
  Testbed tb(s);
  const Pose2D manual(0.6, 1.2, 0.5);
  run_until(tb, [&] { return !tb.plans().empty(); }, 400);
  REQUIRE(!tb.plans().empty());
  CHECK(send(tb, MessageKind::kManualCmd, {{"drone", "d2"}, {"goal", to_json(manual)}}).ok);
  const auto r = send(tb, MessageKind::kSetObjectives, objectives_payload({{"d2", Pose2D(0.3, 0.3, 0)}}));
  CHECK(r.extra["skipped"] == Json::array({"d2"}));
  run_until(tb, [&] { return tb.phase("d2") == ControlPhase::kDone; }, 1500);
  const auto& d2 = *tb.world().find_drone("d2");
  CHECK((d2.pose.position() - manual.position()).norm() <= s.tolerances.position + 0.005);
  CHECK(send(tb, MessageKind::kManualCmd, {{"drone", "d2"}, {"release", true}}).ok);
}

TEST_CASE("autopilot gets one objective per plan, remote gets a command stream") {
  for (auto control : {ControlMode::kAutopilot, ControlMode::kRemote}) {
    CAPTURE(to_string(control));
    auto s = two_drones(OptimizerMode::kCentral, control);
    s.stop.ticks = 600;
    Testbed tb(s);
    tb.run();
    REQUIRE(!tb.plans().empty());
    std::size_t objectives = 0, streamed = 0;
    for (const auto& e : tb.control_network().log()) {
      if (e.from != kCentral || e.to != "d1") continue;
      if (e.message.kind == MessageKind::kSetObjectives) ++objectives;
      if (e.message.kind == MessageKind::kManualCmd && e.message.payload.value("stream", false)) ++streamed;
    }
    std::size_t planned_for_d1 = 0;
    for (const auto& p : tb.plans()) planned_for_d1 += p.objectives.count("d1");
    if (control == ControlMode::kAutopilot) {
      CHECK(objectives == planned_for_d1);
      CHECK(streamed == 0);
    } else {
      CHECK(objectives == 0);
      CHECK(streamed > 400);
    }
  }
}

TEST_CASE("optimizer modes reach the same objectives and coverage") {
  std::vector<std::map<std::string, Pose2D>> first;
  std::vector<int> covered;
  for (auto mode : {OptimizerMode::kCentral, OptimizerMode::kDistributed, OptimizerMode::kEmulation}) {
    Testbed tb(two_drones(mode));
    tb.run();
    REQUIRE(!tb.plans().empty());
    first.push_back(tb.plans().front().objectives);
    covered.push_back(tb.covered_now());
    CHECK(tb.converged());
    CHECK(tb.audit().clean());
    CHECK(tb.degraded_offloads() == 0);
  }
  REQUIRE(first[0].size() == 2);
  CHECK(first[1] == first[0]);
  CHECK(first[2] == first[0]);
  CHECK(covered[0] == 4);
  CHECK(covered[1] == covered[0]);
  CHECK(covered[2] == covered[0]);
}

TEST_CASE("control and mesh traffic stay on their own networks") {
  Testbed tb(two_drones(OptimizerMode::kDistributed));
  tb.run();
  const auto audit = tb.audit();
  CHECK(audit.clean());
  CHECK(audit.control_messages > 0);
  CHECK(audit.mesh_packets > 0);
  for (const auto& e : tb.control_network().log()) CHECK((e.from == kCentral) != (e.to == kCentral));
  for (const auto& p : tb.mesh_payloads()) CHECK(Json::parse(p).contains("claims"));
}

TEST_CASE("emulation falls back to hovering in place while the central node is down") {
  auto s = two_drones(OptimizerMode::kEmulation);
  s.control_latency_ticks = 1;
  s.stop.ticks = 600;
  Testbed tb(s);
  run_until(tb, [&] { return !tb.plans().empty(); }, 600);
  REQUIRE(!tb.plans().empty());
  // The round announcement is already in flight; the offload requests are not.
  tb.control_network().set_central_up(false);
  const auto logged = tb.control_network().log().size();
  std::map<std::string, Vector2> fixes;
  for (const auto& d : tb.world().drones) fixes[d.id] = d.pose.position();
  run_until(tb, [&] { return tb.degraded_offloads() == 2; }, 2 * s.optimizer.claim_timeout_ticks);
  CHECK(tb.degraded_offloads() == 2);
  CHECK(tb.control_network().log().size() == logged);
  const auto& planned = tb.plans().back().objectives;
  REQUIRE(planned.size() == 2);
  for (const auto& [id, goal] : planned) CHECK((goal.position() - fixes[id]).norm() < 0.05);
  tb.run();
  CHECK(tb.audit().clean());
}

TEST_CASE("runs are deterministic down to the artifacts") {
  auto s = two_drones(OptimizerMode::kDistributed);
  s.stop.ticks = 500;
  const auto dir = std::filesystem::temp_directory_path() / "una_determinism";
  std::filesystem::remove_all(dir);
  for (int i = 0; i < 2; ++i) {
    Testbed tb(s);
    tb.run();
    tb.write_artifacts(dir / std::to_string(i));
  }
  for (const char* f : {"summary.json", "control_trace.csv", "packet_trace.csv", "coverage.csv", "control_log.csv"}) {
    CAPTURE(f);
    const auto a = slurp(dir / "0" / f);
    CHECK(!a.empty());
    CHECK(a == slurp(dir / "1" / f));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("an external optimizer is used when it answers, and retried when it does not") {
  struct Fixed : OptimizerPlugin {
    int calls = 0;
    bool answer = true;
    Json last;
    std::optional<std::map<std::string, Pose2D>> request(const Json& state, double deadline) override {
      ++calls;
      last = state;
      CHECK(deadline == doctest::Approx(0.1));
      if (!answer) return std::nullopt;
      return greedy(instance_from_json(state["instance"]));
    }
    static std::map<std::string, Pose2D> greedy(const CoverageInstance& i) { return solve_central(i).assignments; }
  };
  auto s = two_drones(OptimizerMode::kCentral);
  s.optimizer.external = true;
  s.stop.ticks = 700;

  Testbed reference(two_drones(OptimizerMode::kCentral));
  run_until(reference, [&] { return !reference.plans().empty(); }, 600);

  Fixed plugin;
  Testbed tb(s);
  tb.attach_plugin(&plugin);
  run_until(tb, [&] { return !tb.plans().empty(); }, 600);
  REQUIRE(plugin.calls == 1);
  CHECK(plugin.last.contains("drones"));
  CHECK(tb.plans().front().from_plugin);
  CHECK(tb.plans().front().objectives == reference.plans().front().objectives);

  Fixed silent;
  silent.answer = false;
  Testbed quiet(s);
  quiet.attach_plugin(&silent);
  quiet.run();
  CHECK(quiet.plugin_timeouts() >= 2);
  CHECK(silent.calls == quiet.plugin_timeouts());
  for (const auto& p : quiet.plans()) CHECK(p.timed_out);
  const int gap = int((quiet.plans()[1].tick - quiet.plans()[0].tick) * s.arena.tick / s.vision_period + 0.5);
  CHECK(gap == 20);
  CHECK(!quiet.objective("d1"));
}

TEST_CASE("summary reports the run") {
  auto s = two_drones(OptimizerMode::kCentral);
  s.stop.ticks = 300;
  Testbed tb(s);
  tb.run();
  const auto j = tb.summary();
  CHECK(j["scenario"] == "pair");
  CHECK(j["ticks"] == 300);
  CHECK(j["frames"] == tb.frames());
  CHECK(j["networks_separated"] == true);
  CHECK(j["drones"].size() == 2);
}
