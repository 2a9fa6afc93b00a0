#include "una/arena.hpp"

#include <algorithm>
#include <cmath>

namespace una {

const char* to_string(FlightPhase phase) {
  switch (phase) {
    case FlightPhase::kLanded: return "LANDED";
    case FlightPhase::kTakingOff: return "TAKING_OFF";
    case FlightPhase::kFlying: return "FLYING";
    case FlightPhase::kLanding: return "LANDING";
  }
  return "?";
}

const char* to_string(AtCommand::Kind kind) {
  switch (kind) {
    case AtCommand::Kind::kTakeoff: return "TAKEOFF";
    case AtCommand::Kind::kLand: return "LAND";
    case AtCommand::Kind::kHover: return "HOVER";
    case AtCommand::Kind::kProgressive: return "PROGRESSIVE";
  }
  return "?";
}

const char* to_string(CommandStatus status) {
  switch (status) {
    case CommandStatus::kNone: return "none";
    case CommandStatus::kApplied: return "applied";
    case CommandStatus::kIgnored: return "ignored";
    case CommandStatus::kWarning: return "warning";
    case CommandStatus::kRejected: return "rejected";
  }
  return "?";
}

namespace {

bool unit_range(double v) { return std::isfinite(v) && v >= -1.0 && v <= 1.0; }

}  // namespace

AtCommand AtCommand::progressive(double roll, double pitch, double gaz, double yaw_rate) {
  AtCommand cmd{Kind::kProgressive, roll, pitch, gaz, yaw_rate};
  if (!cmd.valid()) throw std::out_of_range("progressive setpoints must lie in [-1, 1]");
  return cmd;
}

bool AtCommand::valid() const {
  return unit_range(roll) && unit_range(pitch) && unit_range(gaz) && unit_range(yaw_rate);
}

Vector2 Target::position_at(double time) const {
  if (script.empty()) return position;
  if (time < script.front().time) return script.front().position;
  // Last waypoint at or before `time`; equal times resolve to the later entry.
  auto after = std::upper_bound(script.begin(), script.end(), time,
                                [](double t, const TargetWaypoint& w) { return t < w.time; });
  const auto& a = *(after - 1);
  if (after == script.end()) return a.position;
  const auto& b = *after;
  const double span = b.time - a.time;
  if (span <= 0) return b.position;
  const double f = (time - a.time) / span;
  return a.position + f * (b.position - a.position);
}

void ArenaConfig::validate() const {
  if (!(width > 0) || !(height > 0)) throw std::invalid_argument("arena dimensions must be positive");
  if (!(camera_height > 0)) throw std::invalid_argument("camera height must be positive");
  if (!(tick > 0)) throw std::invalid_argument("tick must be positive");
  if (!(drag > 0) || !(tilt_gain > 0)) throw std::invalid_argument("dynamics gains must be positive");
  if (render.width_px <= 0 || render.height_px <= 0)
    throw std::invalid_argument("render resolution must be positive");
}

const DroneState* WorldState::find_drone(const std::string& id) const {
  auto it = std::lower_bound(drones.begin(), drones.end(), id,
                             [](const DroneState& d, const std::string& key) { return d.id < key; });
  return it != drones.end() && it->id == id ? &*it : nullptr;
}

DroneState* WorldState::find_drone(const std::string& id) {
  return const_cast<DroneState*>(std::as_const(*this).find_drone(id));
}

WorldState make_world(const ArenaConfig& config, std::vector<DroneState> drones,
                      std::vector<Target> targets) {
  config.validate();
  std::sort(drones.begin(), drones.end(),
            [](const DroneState& a, const DroneState& b) { return a.id < b.id; });
  for (auto& d : drones) d.compass_yaw = d.pose.yaw();
  for (auto& t : targets) t.position = t.position_at(0.0);

  WorldState world;
  world.config = config;
  world.drones = std::move(drones);
  world.targets = std::move(targets);
  world.rng.seed(config.noise.seed);
  return world;
}

CommandOutcome apply_command(const DroneState& drone, const AtCommand& cmd,
                             const ArenaConfig& config) {
  DroneState next = drone;
  if (!cmd.valid()) return {drone, CommandStatus::kRejected};

  if (cmd.kind == AtCommand::Kind::kTakeoff) {
    if (drone.phase != FlightPhase::kLanded) return {drone, CommandStatus::kWarning};
    next.phase = FlightPhase::kTakingOff;
    next.maneuver_ticks = config.takeoff_ticks;
    next.setpoint = {};
    return {next, CommandStatus::kApplied};
  }
  if (drone.phase != FlightPhase::kFlying) return {drone, CommandStatus::kIgnored};

  switch (cmd.kind) {
    case AtCommand::Kind::kLand:
      next.phase = FlightPhase::kLanding;
      next.maneuver_ticks = config.takeoff_ticks;
      next.setpoint = {};
      break;
    case AtCommand::Kind::kHover:
      next.setpoint = {};
      break;
    case AtCommand::Kind::kProgressive:
      next.setpoint = {cmd.roll, cmd.pitch, cmd.gaz, cmd.yaw_rate};
      break;
    case AtCommand::Kind::kTakeoff:
      break;
  }
  return {next, CommandStatus::kApplied};
}

namespace {

void advance_maneuver(DroneState& d) {
  if (d.phase != FlightPhase::kTakingOff && d.phase != FlightPhase::kLanding) return;
  if (--d.maneuver_ticks > 0) return;
  d.maneuver_ticks = 0;
  if (d.phase == FlightPhase::kTakingOff) {
    d.phase = FlightPhase::kFlying;
  } else {
    d.phase = FlightPhase::kLanded;
    d.velocity.setZero();
    d.yaw_rate = 0;
  }
}

void integrate_flight(DroneState& d, const ArenaConfig& cfg, double dt, std::mt19937_64& rng) {
  double pitch = d.setpoint.pitch;
  double roll = d.setpoint.roll;
  if (cfg.noise.actuation_std > 0) {
    std::normal_distribution<double> n(0.0, cfg.noise.actuation_std);
    pitch += n(rng);
    roll += n(rng);
  }
  Vector2 tilt(pitch, roll);
  if (tilt.norm() > 1.0) tilt.normalize();

  const Vector2 accel = cfg.tilt_gain * (tilt.x() * d.pose.forward() + tilt.y() * d.pose.right());
  const Vector2 v_inf = accel / cfg.drag;
  const double decay = std::exp(-cfg.drag * dt);
  const Vector2 dv = d.velocity - v_inf;

  d.pose.set_position(d.pose.position() + v_inf * dt + dv * ((1.0 - decay) / cfg.drag));
  d.velocity = v_inf + dv * decay;
  const double speed = d.velocity.norm();
  if (speed > cfg.v_max) d.velocity *= cfg.v_max / speed;

  d.yaw_rate = d.setpoint.yaw_rate * cfg.yaw_rate_max;
  d.pose.set_yaw(d.pose.yaw() + d.yaw_rate * dt);
}

}  // namespace

WorldState step(WorldState world, const CommandMap& commands, double dt) {
  const ArenaConfig& cfg = world.config;
  for (const auto& [id, cmd] : commands) {
    if (!world.find_drone(id)) throw UnknownDroneError(id);
  }

  for (auto& d : world.drones) {
    d.last_status = CommandStatus::kNone;
    if (auto it = commands.find(d.id); it != commands.end()) {
      auto outcome = apply_command(d, it->second, cfg);
      d = std::move(outcome.state);
      d.last_status = outcome.status;
    }

    if (d.phase == FlightPhase::kFlying) {
      integrate_flight(d, cfg, dt, world.rng);
    } else {
      advance_maneuver(d);
    }

    d.compass_yaw = d.pose.yaw();
    if (cfg.noise.compass_std > 0) {
      std::normal_distribution<double> n(0.0, cfg.noise.compass_std);
      d.compass_yaw = wrap_angle(d.pose.yaw() + n(world.rng));
    }
    if (d.phase != FlightPhase::kLanded)
      d.battery = std::max(0.0, d.battery - cfg.battery_drain * dt);

    if (!d.pose.finite() || !d.velocity.allFinite())
      throw SimulationFault("non-finite state for drone " + d.id);
  }

  ++world.tick_index;
  world.time = static_cast<double>(world.tick_index) * dt;
  for (auto& t : world.targets) t.position = t.position_at(world.time);
  return world;
}

Vector2 world_to_pixel(const ArenaConfig& config, const Vector2& world) {
  return {world.x() / config.meters_per_pixel_x() - 0.5,
          world.y() / config.meters_per_pixel_y() - 0.5};
}

namespace {

void draw_disk(Frame& frame, const ArenaConfig& cfg, const Vector2& center, double radius, Rgb color) {
  const Vector2 c = world_to_pixel(cfg, center);
  const double ru = radius / cfg.meters_per_pixel_x();
  const double rv = radius / cfg.meters_per_pixel_y();
  const int u0 = std::max(0, static_cast<int>(std::floor(c.x() - ru)));
  const int u1 = std::min(frame.width() - 1, static_cast<int>(std::ceil(c.x() + ru)));
  const int v0 = std::max(0, static_cast<int>(std::floor(c.y() - rv)));
  const int v1 = std::min(frame.height() - 1, static_cast<int>(std::ceil(c.y() + rv)));
  for (int v = v0; v <= v1; ++v) {
    const double dv = (v - c.y()) / rv;
    for (int u = u0; u <= u1; ++u) {
      const double du = (u - c.x()) / ru;
      if (du * du + dv * dv <= 1.0) frame.set(u, v, color);
    }
  }
}

}  // namespace

Frame render_overhead(const WorldState& world) {
  const ArenaConfig& cfg = world.config;
  Frame frame(cfg.render.width_px, cfg.render.height_px, cfg.render.background);
  for (const auto& t : world.targets)
    draw_disk(frame, cfg, t.position, cfg.render.target_radius, cfg.render.target_color);
  for (const auto& d : world.drones)
    draw_disk(frame, cfg, d.pose.position(), cfg.render.drone_radius, d.tag);

  if (cfg.noise.render_std > 0) {
    std::seed_seq seq{cfg.noise.seed, world.tick_index, std::uint64_t{0x72656e646572}};
    std::mt19937 rng(seq);
    std::normal_distribution<double> n(0.0, cfg.noise.render_std);
    for (auto& byte : frame.bytes()) {
      const double value = std::round(byte + n(rng));
      byte = static_cast<std::uint8_t>(std::clamp(value, 0.0, 255.0));
    }
  }
  return frame;
}

}  // namespace una
