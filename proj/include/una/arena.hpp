#ifndef UNA_ARENA_HPP
#define UNA_ARENA_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "una/frame.hpp"
#include "una/geometry.hpp"

namespace una {

enum class FlightPhase { kLanded, kTakingOff, kFlying, kLanding };

const char* to_string(FlightPhase phase);

/// AT-style command. Progressive setpoints are dimensionless, in [-1, 1].
struct AtCommand {
  enum class Kind { kTakeoff, kLand, kHover, kProgressive };

  Kind kind = Kind::kHover;
  double roll = 0;
  double pitch = 0;
  double gaz = 0;
  double yaw_rate = 0;

  static AtCommand takeoff() { return {Kind::kTakeoff}; }
  static AtCommand land() { return {Kind::kLand}; }
  static AtCommand hover() { return {Kind::kHover}; }
  /// Throws std::out_of_range unless every setpoint lies in [-1, 1].
  static AtCommand progressive(double roll, double pitch, double gaz, double yaw_rate);

  bool valid() const;

  friend bool operator==(const AtCommand&, const AtCommand&) = default;
};

const char* to_string(AtCommand::Kind kind);

/// Result of handing a command to a drone.
enum class CommandStatus { kNone, kApplied, kIgnored, kWarning, kRejected };

const char* to_string(CommandStatus status);

struct Setpoint {
  double roll = 0, pitch = 0, gaz = 0, yaw_rate = 0;
  friend bool operator==(const Setpoint&, const Setpoint&) = default;
};

struct DroneState {
  std::string id;
  Rgb tag;
  Pose2D pose;
  Vector2 velocity = Vector2::Zero();
  double yaw_rate = 0;
  double compass_yaw = 0;
  double battery = 1.0;
  FlightPhase phase = FlightPhase::kLanded;
  /// Ticks left in a takeoff or landing maneuver.
  int maneuver_ticks = 0;
  Setpoint setpoint;
  CommandStatus last_status = CommandStatus::kNone;

  friend bool operator==(const DroneState&, const DroneState&) = default;
};

struct TargetWaypoint {
  double time = 0;
  Vector2 position = Vector2::Zero();
};

/// A target follows its script by linear interpolation between waypoints and
/// holds the first/last waypoint outside the scripted interval. Two waypoints
/// with the same time make an instantaneous move.
struct Target {
  std::string id;
  Vector2 position = Vector2::Zero();
  std::vector<TargetWaypoint> script;

  Vector2 position_at(double time) const;

  friend bool operator==(const Target& a, const Target& b) {
    return a.id == b.id && a.position == b.position;
  }
};

struct NoiseConfig {
  double compass_std = 0;    // radians
  double actuation_std = 0;  // tilt units
  double render_std = 0;     // 8-bit channel units
  std::uint64_t seed = 1;

  static NoiseConfig none() { return {}; }
  /// Noise levels used by the placement benchmark unless overridden.
  static NoiseConfig standard(std::uint64_t seed = 1) { return {0.02, 0.05, 0.0, seed}; }
};

struct RenderConfig {
  int width_px = 500;
  int height_px = 840;
  double drone_radius = 0.04;
  double target_radius = 0.03;
  Rgb background{60, 60, 60};
  Rgb target_color{220, 40, 220};
};

struct ArenaConfig {
  double width = 1.25;
  double height = 2.1;
  double camera_height = 5.2;
  double tick = 0.02;
  double tilt_gain = 1.0;  // m/s^2 per unit tilt
  double drag = 2.0;       // 1/s
  double v_max = 0.5;      // m/s
  double yaw_rate_max = 1.0;
  int takeoff_ticks = 50;
  double battery_drain = 1.0 / 720.0;  // fraction per flying second
  NoiseConfig noise;
  RenderConfig render;

  Bounds bounds() const { return {width, height}; }
  double meters_per_pixel_x() const { return width / render.width_px; }
  double meters_per_pixel_y() const { return height / render.height_px; }
  double pixel_width() const { return std::max(meters_per_pixel_x(), meters_per_pixel_y()); }

  /// Throws std::invalid_argument on a non-positive dimension or tick.
  void validate() const;
};

struct WorldState {
  ArenaConfig config;
  std::uint64_t tick_index = 0;
  double time = 0;
  std::vector<DroneState> drones;  // ascending id
  std::vector<Target> targets;
  std::mt19937_64 rng;

  const DroneState* find_drone(const std::string& id) const;
  DroneState* find_drone(const std::string& id);

  friend bool operator==(const WorldState& a, const WorldState& b) {
    return a.tick_index == b.tick_index && a.time == b.time && a.drones == b.drones &&
           a.targets == b.targets && a.rng == b.rng;
  }
};

/// Builds a world with drones sorted by id and the noise stream seeded.
WorldState make_world(const ArenaConfig& config, std::vector<DroneState> drones,
                      std::vector<Target> targets);

class UnknownDroneError : public std::invalid_argument {
 public:
  explicit UnknownDroneError(const std::string& id)
      : std::invalid_argument("unknown drone id: " + id), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandOutcome {
  DroneState state;
  CommandStatus status;
};

CommandOutcome apply_command(const DroneState& drone, const AtCommand& cmd,
                             const ArenaConfig& config);

using CommandMap = std::map<std::string, AtCommand>;

/// Advances the world by one tick. Flying drones follow first-order dynamics
/// dv/dt = k * tilt - c * v, integrated exactly over the tick with the tilt
/// held constant.
WorldState step(WorldState world, const CommandMap& commands, double dt);

/// Top-down view: background, target disks, then drone disks on top.
Frame render_overhead(const WorldState& world);

/// Pixel index space: pixel u covers world x in [u, u+1) * meters_per_pixel_x.
Vector2 world_to_pixel(const ArenaConfig& config, const Vector2& world);

}  // namespace una

#endif  // UNA_ARENA_HPP
