#ifndef UNA_TESTBED_HPP
#define UNA_TESTBED_HPP

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "una/arena.hpp"
#include "una/control.hpp"
#include "una/coverage.hpp"
#include "una/mesh.hpp"
#include "una/network.hpp"
#include "una/scenario.hpp"
#include "una/vision.hpp"
#include "una/wire.hpp"

namespace una {

/// Outcome of a client message handled by the stepping context.
struct Reply {
  bool ok = true;
  std::string reason;
  Json extra = Json::object();
};

/// An external optimizer reachable over the wire.
class OptimizerPlugin {
 public:
  virtual ~OptimizerPlugin() = default;
  /// Sends `state_update` (which carries the planning instance) and waits up
  /// to `deadline_s` seconds for objectives. Nothing means no timely reply.
  virtual std::optional<std::map<std::string, Pose2D>> request(const Json& state_update, double deadline_s) = 0;
};

/// Immutable view published after every vision frame.
struct Snapshot {
  std::uint64_t frame = 0;
  std::int64_t tick = 0;
  double time = 0;
  std::shared_ptr<const WorldState> world;
  Json state;  // STATE_UPDATE payload
};

struct CoverageSample {
  std::int64_t tick = 0;
  double time = 0;
  int covered = 0;
};

/// Interval with every target at rest, and the coverage reached at its end.
struct Plateau {
  double start = 0;
  double end = 0;
  int covered = 0;
};

/// One planning round handed to the optimizer.
struct PlanRecord {
  std::int64_t tick = 0;
  CoverageInstance instance;
  std::map<std::string, Pose2D> objectives;
  bool from_plugin = false;
  bool timed_out = false;
};

/// The central node and its drones: arena stepping, overhead vision at its own
/// rate, coverage optimization in the configured mode, one controller per
/// drone (drone-side in autopilot, central-side in remote), the control star
/// and the coordination mesh. Everything that changes the world happens on
/// the thread calling step(); other threads talk to it through submit().
class Testbed {
 public:
  explicit Testbed(Scenario scenario);
  ~Testbed();

  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  void step();
  /// Steps until the stop condition holds.
  void run();
  bool finished() const;

  const Scenario& scenario() const { return scenario_; }
  std::int64_t tick() const { return std::int64_t(world_.tick_index); }
  double time() const { return world_.time; }
  const WorldState& world() const { return world_; }

  /// Queues a client message for the next step. Thread-safe.
  std::future<Reply> submit(WireMessage message);

  using Listener = std::function<void(const std::shared_ptr<const Snapshot>&)>;
  int subscribe(Listener listener);
  void unsubscribe(int token);
  std::shared_ptr<const Snapshot> latest() const;

  void attach_plugin(OptimizerPlugin* plugin);

  ControlPhase phase(const std::string& drone) const;
  ControlMode mode(const std::string& drone) const;
  std::optional<Pose2D> objective(const std::string& drone) const;
  bool converged() const;

  const ControlNetwork& control_network() const { return control_; }
  ControlNetwork& control_network() { return control_; }
  const Mesh& mesh() const { return mesh_; }
  const std::vector<std::string>& mesh_payloads() const { return mesh_payloads_; }
  SeparationAudit audit() const;

  const std::vector<CoverageSample>& coverage_log() const { return coverage_log_; }
  std::vector<Plateau> plateaus() const;
  const std::vector<PlanRecord>& plans() const { return plans_; }
  const std::vector<ControlTraceRow>& control_trace() const { return control_trace_; }
  int plugin_timeouts() const { return plugin_timeouts_; }
  int degraded_offloads() const { return degraded_offloads_; }
  int frames() const { return int(frame_); }

  /// Camera the optimizer plans against.
  CameraModel planning_camera() const;
  /// True coverage: flying drones' actual poses against actual targets.
  int covered_now() const;

  /// Conditions that make a run count as failed: drones ending with a lost
  /// track, and traffic crossing between the two networks.
  std::vector<std::string> faults() const;

  Json summary() const;
  /// summary.json, control_trace.csv, packet_trace.csv, coverage.csv, control_log.csv.
  void write_artifacts(const std::filesystem::path& dir) const;

 private:
  struct Agent;
  struct CentralView;
  struct Pending {
    WireMessage message;
    std::promise<Reply> reply;
  };

  Reply handle_client(const WireMessage& m);
  void dispatch_objective(const std::string& drone, const Pose2D& goal);
  void forward(const std::string& drone, MessageKind kind, Json payload);
  void vision_frame();
  void maybe_plan(const std::vector<Detection>& targets);
  void plan(const std::vector<Vector2>& targets);
  void agent_receive(Agent& a);
  void agent_plan(Agent& a);
  AtCommand agent_command(Agent& a, const DroneState& d);
  void remote_commands();
  void publish(const TagScan& scan);
  CoverageInstance instance_for(const std::vector<Vector2>& targets, bool skip_manual) const;

  Scenario scenario_;
  WorldState world_;
  Calibration calibration_;
  ControlNetwork control_;
  Mesh mesh_;
  std::map<std::string, NodeId> mesh_ids_;
  std::vector<std::unique_ptr<Agent>> agents_;
  std::map<std::string, std::unique_ptr<CentralView>> central_;

  double next_frame_ = 0;
  std::uint64_t frame_ = 0;
  bool frame_this_tick_ = false;
  bool halted_ = false;
  bool planned_ = false;
  int unmatched_streak_ = 0;
  int retry_in_frames_ = -1;
  std::vector<Vector2> known_targets_;
  std::vector<Detection> last_targets_;
  std::uint64_t round_ = 0;
  std::map<std::string, Pose2D> last_objectives_;

  std::vector<PlanRecord> plans_;
  std::vector<CoverageSample> coverage_log_;
  std::vector<ControlTraceRow> control_trace_;
  std::vector<std::string> mesh_payloads_;
  int plugin_timeouts_ = 0;
  int degraded_offloads_ = 0;
  int lost_tracking_ticks_ = 0;

  mutable std::mutex queue_mutex_;
  std::deque<Pending> queue_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> latest_;
  std::map<int, Listener> listeners_;
  int next_listener_ = 0;
  std::mutex plugin_mutex_;
  OptimizerPlugin* plugin_ = nullptr;
};

}  // namespace una

#endif  // UNA_TESTBED_HPP
