#ifndef UNA_SCENARIO_HPP
#define UNA_SCENARIO_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "una/arena.hpp"
#include "una/control.hpp"
#include "una/coverage.hpp"
#include "una/mesh.hpp"

namespace una {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DroneSpec {
  std::string id;
  Rgb color;
  Pose2D start;
  ControlMode mode = ControlMode::kAutopilot;
  int line = 0;  // source line, 0 when built in code
};

struct TargetSpec {
  std::string id;
  std::vector<TargetWaypoint> script;  // a single waypoint means a fixed target
  int line = 0;
};

struct OptimizerSpec {
  OptimizerMode mode = OptimizerMode::kCentral;
  CameraModel camera;
  CandidateGrid grid;
  /// Plan against a camera narrowed by the controller tolerances so that a
  /// drone parked anywhere within tolerance still sees its targets.
  bool tolerance_margin = true;
  int replan_frames = 5;  // frames an unmatched target must persist
  double match_radius = 0.1;
  int claim_timeout_ticks = 100;  // distributed mode, per rank
  bool external = false;          // wait for an optimizer plugin
  double plugin_deadline_periods = 2;
};

struct StopSpec {
  int ticks = 3000;
  bool on_convergence = false;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  ArenaConfig arena;
  std::vector<DroneSpec> drones;
  std::vector<TargetSpec> targets;
  OptimizerSpec optimizer;
  Tolerances tolerances;
  ControllerGains gains;
  LinkModel mesh_link;
  AodvConfig aodv;
  int control_latency_ticks = 0;
  double vision_period = 0.05;
  bool autostart = true;  // take off every drone at t = 0
  StopSpec stop;

  /// Applies `seed` to every random stream.
  void reseed(std::uint64_t s);
  /// Throws ScenarioError naming the offending entry (and its line when known).
  void validate(const std::string& source = "scenario") const;
};

Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& yaml, const std::string& source = "scenario");

}  // namespace una

#endif  // UNA_SCENARIO_HPP
