#include "una/control.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace una {

const char* to_string(ControlPhase phase) {
  switch (phase) {
    case ControlPhase::kIdle: return "IDLE";
    case ControlPhase::kAlign90: return "ALIGN_90";
    case ControlPhase::kMoveX: return "MOVE_X";
    case ControlPhase::kMoveY: return "MOVE_Y";
    case ControlPhase::kRotateFinal: return "ROTATE_FINAL";
    case ControlPhase::kDone: return "DONE";
  }
  return "?";
}

const char* to_string(ControlMode mode) {
  return mode == ControlMode::kAutopilot ? "AUTOPILOT" : "REMOTE";
}

namespace {

constexpr double kAligned = std::numbers::pi / 2;

double saturate(double v, double cap) { return std::clamp(v, -cap, cap); }

void enter(ControllerState& s, ControlPhase phase) {
  s.phase = phase;
  s.trace.push_back(phase);
}

bool at_goal(const ControllerState& s, const Vector2& pos, double yaw) {
  const auto& goal = s.objective->goal;
  return (goal.position() - pos).norm() <= s.tolerances.position &&
         std::abs(angle_diff(goal.yaw(), yaw)) <= s.tolerances.yaw;
}

// Advances through every phase whose exit condition already holds.
void settle_phase(ControllerState& s, const Vector2& pos, double yaw) {
  const auto& goal = s.objective->goal;
  const auto& tol = s.tolerances;
  if (s.phase == ControlPhase::kIdle) {
    if (at_goal(s, pos, yaw)) {
      enter(s, ControlPhase::kDone);
      return;
    }
    s.anchor = pos;
    enter(s, ControlPhase::kAlign90);
  }
  if (s.phase == ControlPhase::kAlign90) {
    if (std::abs(angle_diff(kAligned, yaw)) > tol.yaw) return;
    s.anchor = pos;
    enter(s, ControlPhase::kMoveX);
  }
  if (s.phase == ControlPhase::kMoveX) {
    if (std::abs(goal.x() - pos.x()) > tol.position) return;
    enter(s, ControlPhase::kMoveY);
  }
  if (s.phase == ControlPhase::kMoveY) {
    if (std::abs(goal.y() - pos.y()) > tol.position) return;
    enter(s, ControlPhase::kRotateFinal);
  }
  if (s.phase == ControlPhase::kRotateFinal) {
    if (!at_goal(s, pos, yaw)) return;
    enter(s, ControlPhase::kDone);
  }
}

// Proportional pull toward `target` with per-axis saturation, expressed in the
// body frame given by the compass heading.
AtCommand steer(const Vector2& target, const Vector2& pos, double heading_goal, double compass,
                const ControllerGains& g) {
  const Vector2 tilt_world(saturate(g.position * (target.x() - pos.x()), g.tilt_cap),
                           saturate(g.position * (target.y() - pos.y()), g.tilt_cap));
  const Pose2D body(pos, compass);
  const double pitch = std::clamp(tilt_world.dot(body.forward()), -1.0, 1.0);
  const double roll = std::clamp(tilt_world.dot(body.right()), -1.0, 1.0);
  const double yaw_rate = saturate(g.yaw * angle_diff(heading_goal, compass), std::min(g.yaw_cap, 1.0));
  return AtCommand::progressive(roll, pitch, 0.0, yaw_rate);
}

}  // namespace

ControllerState begin_objective(ControllerState state, Objective objective) {
  state.objective = std::move(objective);
  state.phase = ControlPhase::kIdle;
  state.fault = ControlFault::kNone;
  state.trace.clear();
  return state;
}

ControlOutput control_tick(ControllerState state, const std::optional<Detection>& fix,
                           double compass, double now, const ControllerGains& gains) {
  if (fix) state.last_fix = fix;
  if (!state.objective || state.phase == ControlPhase::kDone) return {std::move(state), AtCommand::hover()};

  if (!state.last_fix || now - state.last_fix->timestamp > gains.stale_timeout) {
    state.fault = ControlFault::kLostTracking;
    return {std::move(state), AtCommand::hover()};
  }
  state.fault = ControlFault::kNone;

  const Vector2 pos = state.last_fix->world_position;
  settle_phase(state, pos, compass);

  const auto& goal = state.objective->goal;
  AtCommand cmd = AtCommand::hover();
  switch (state.phase) {
    case ControlPhase::kAlign90:
      cmd = steer(state.anchor, pos, kAligned, compass, gains);
      break;
    case ControlPhase::kMoveX:
      cmd = steer({goal.x(), state.anchor.y()}, pos, kAligned, compass, gains);
      break;
    case ControlPhase::kMoveY:
      cmd = steer(goal.position(), pos, kAligned, compass, gains);
      break;
    case ControlPhase::kRotateFinal:
      cmd = steer(goal.position(), pos, goal.yaw(), compass, gains);
      break;
    case ControlPhase::kIdle:
    case ControlPhase::kDone:
      break;
  }
  return {std::move(state), cmd};
}

double measure_placement_error(const Pose2D& goal, const Detection& fix) {
  return (goal.position() - fix.world_position).norm();
}

void write_control_trace_csv(std::ostream& out, const std::vector<ControlTraceRow>& rows) {
  out << "time,drone,phase,x,y,yaw,command,roll,pitch,gaz,yaw_rate\n";
  out << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.time << ',' << r.drone << ',' << to_string(r.phase) << ',' << r.pose.x() << ','
        << r.pose.y() << ',' << r.pose.yaw() << ',' << to_string(r.command.kind) << ','
        << r.command.roll << ',' << r.command.pitch << ',' << r.command.gaz << ','
        << r.command.yaw_rate << '\n';
  }
}

}  // namespace una
