#ifndef UNA_CONTROL_HPP
#define UNA_CONTROL_HPP

#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "una/arena.hpp"
#include "una/vision.hpp"

namespace una {

enum class ControlPhase { kIdle, kAlign90, kMoveX, kMoveY, kRotateFinal, kDone };

const char* to_string(ControlPhase phase);

enum class ControlMode { kAutopilot, kRemote };

const char* to_string(ControlMode mode);

struct Objective {
  std::string drone;
  Pose2D goal;
  double issued_at = 0;
};

struct Tolerances {
  double position = 0.05;                        // meters
  double yaw = 5.0 * std::numbers::pi / 180.0;  // radians
};

struct ControllerGains {
  double position = 1.0;  // tilt per meter of error
  double yaw = 2.0;       // yaw-rate setpoint per radian of error
  double tilt_cap = 0.5;  // per world axis
  double yaw_cap = 1.0;
  double stale_timeout = 0.5;  // seconds without a fresh fix
};

enum class ControlFault { kNone, kLostTracking };

struct ControllerState {
  ControlPhase phase = ControlPhase::kIdle;
  std::optional<Objective> objective;
  std::optional<Detection> last_fix;
  Tolerances tolerances;
  ControlFault fault = ControlFault::kNone;
  /// Position held while aligning, and the cross-track coordinate held
  /// while moving along x.
  Vector2 anchor = Vector2::Zero();
  /// Every phase entered for the current objective, in order.
  std::vector<ControlPhase> trace;
};

/// Installs a new objective; the next tick leaves IDLE.
ControllerState begin_objective(ControllerState state, Objective objective);

struct ControlOutput {
  ControllerState state;
  AtCommand command;
};

/// One closed-loop step. `fix` is the latest vision detection of the drone
/// (may be absent), `compass` its heading reading, `now` the current time.
ControlOutput control_tick(ControllerState state, const std::optional<Detection>& fix,
                           double compass, double now, const ControllerGains& gains = {});

/// Planar distance between the commanded goal and the measured fix.
double measure_placement_error(const Pose2D& goal, const Detection& fix);

struct ControlTraceRow {
  double time = 0;
  std::string drone;
  ControlPhase phase = ControlPhase::kIdle;
  Pose2D pose;
  AtCommand command;
};

void write_control_trace_csv(std::ostream& out, const std::vector<ControlTraceRow>& rows);

}  // namespace una

#endif  // UNA_CONTROL_HPP
