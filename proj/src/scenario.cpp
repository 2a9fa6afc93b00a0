#include "una/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "una/vision.hpp"

namespace una {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

[[noreturn]] void fail(const std::string& source, int line, const std::string& what) {
  throw ScenarioError(line > 0 ? source + ":" + std::to_string(line) + ": " + what : source + ": " + what);
}

int line_of(const YAML::Node& n) { return n.Mark().line + 1; }

double hue_gap(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

template <typename T>
T get(const YAML::Node& parent, const char* key, T fallback) {
  const auto n = parent[key];
  return n ? n.as<T>() : fallback;
}

struct Parser {
  std::string source;

  std::vector<double> numbers(const YAML::Node& n, std::size_t count, const char* what) {
    if (!n.IsSequence() || n.size() != count)
      fail(source, line_of(n), std::string(what) + " must be a list of " + std::to_string(count) + " numbers");
    std::vector<double> out;
    for (const auto& v : n) out.push_back(v.as<double>());
    return out;
  }

  Scenario parse(const YAML::Node& root) {
    if (!root.IsMap()) fail(source, root ? line_of(root) : 0, "expected a mapping at top level");
    Scenario s;
    s.name = get<std::string>(root, "name", s.name);
    s.seed = get<std::uint64_t>(root, "seed", s.seed);
    s.autostart = get<bool>(root, "autostart", s.autostart);
    s.vision_period = get<double>(root, "vision_period", s.vision_period);

    if (const auto a = root["arena"]) {
      s.arena.width = get(a, "width", s.arena.width);
      s.arena.height = get(a, "height", s.arena.height);
      s.arena.tick = get(a, "tick", s.arena.tick);
      s.arena.camera_height = get(a, "camera_height", s.arena.camera_height);
      s.arena.tilt_gain = get(a, "tilt_gain", s.arena.tilt_gain);
      s.arena.drag = get(a, "drag", s.arena.drag);
      s.arena.v_max = get(a, "v_max", s.arena.v_max);
      s.arena.takeoff_ticks = get(a, "takeoff_ticks", s.arena.takeoff_ticks);
      if (const auto r = a["render"]) {
        s.arena.render.width_px = get(r, "width_px", s.arena.render.width_px);
        s.arena.render.height_px = get(r, "height_px", s.arena.render.height_px);
      }
    }
    if (const auto n = root["noise"]) {
      s.arena.noise.compass_std = get(n, "compass_std", 0.0);
      s.arena.noise.actuation_std = get(n, "actuation_std", 0.0);
      s.arena.noise.render_std = get(n, "render_std", 0.0);
    }

    const auto drones = root["drones"];
    if (!drones || !drones.IsSequence()) fail(source, line_of(root), "'drones' must be a list");
    for (const auto& d : drones) {
      DroneSpec spec;
      spec.line = line_of(d);
      if (!d["id"]) fail(source, spec.line, "drone entry needs an 'id'");
      spec.id = d["id"].as<std::string>();
      const auto c = numbers(d["color"], 3, "drone color");
      for (double v : c)
        if (v < 0 || v > 255) fail(source, spec.line, "drone '" + spec.id + "' color channels must lie in [0, 255]");
      spec.color = Rgb{std::uint8_t(c[0]), std::uint8_t(c[1]), std::uint8_t(c[2])};
      const auto p = numbers(d["pose"], 3, "drone pose");
      spec.start = Pose2D(p[0], p[1], p[2]);
      const auto mode = get<std::string>(d, "mode", "autopilot");
      if (mode == "autopilot")
        spec.mode = ControlMode::kAutopilot;
      else if (mode == "remote")
        spec.mode = ControlMode::kRemote;
      else
        fail(source, line_of(d["mode"]), "drone '" + spec.id + "' mode must be autopilot or remote");
      s.drones.push_back(spec);
    }

    if (const auto targets = root["targets"]) {
      int index = 0;
      for (const auto& t : targets) {
        TargetSpec spec;
        spec.line = line_of(t);
        spec.id = get<std::string>(t, "id", "t" + std::to_string(++index));
        if (t["position"]) {
          const auto p = numbers(t["position"], 2, "target position");
          spec.script.push_back({0.0, {p[0], p[1]}});
        } else if (t["script"] && t["script"].IsSequence()) {
          for (const auto& w : t["script"]) {
            const auto v = numbers(w, 3, "script waypoint [time, x, y]");
            if (!spec.script.empty() && v[0] < spec.script.back().time)
              fail(source, line_of(w), "target '" + spec.id + "' script times must not decrease");
            spec.script.push_back({v[0], {v[1], v[2]}});
          }
        }
        if (spec.script.empty()) fail(source, spec.line, "target '" + spec.id + "' needs a position or a script");
        s.targets.push_back(spec);
      }
    }

    if (const auto o = root["optimizer"]) {
      try {
        s.optimizer.mode = optimizer_mode_from_string(get<std::string>(o, "mode", "central"));
      } catch (const std::invalid_argument& e) {
        fail(source, line_of(o["mode"]), e.what());
      }
      s.optimizer.external = get(o, "external", s.optimizer.external);
      if (o["fov_deg"]) s.optimizer.camera.fov = o["fov_deg"].as<double>() * kDeg;
      s.optimizer.camera.r_min = get(o, "r_min", s.optimizer.camera.r_min);
      s.optimizer.camera.r_max = get(o, "r_max", s.optimizer.camera.r_max);
      s.optimizer.grid.pitch = get(o, "pitch", s.optimizer.grid.pitch);
      s.optimizer.grid.orientations = get(o, "orientations", s.optimizer.grid.orientations);
      s.optimizer.tolerance_margin = get(o, "tolerance_margin", s.optimizer.tolerance_margin);
      s.optimizer.replan_frames = get(o, "replan_frames", s.optimizer.replan_frames);
      s.optimizer.match_radius = get(o, "match_radius", s.optimizer.match_radius);
      s.optimizer.claim_timeout_ticks = get(o, "claim_timeout_ticks", s.optimizer.claim_timeout_ticks);
      s.optimizer.plugin_deadline_periods = get(o, "plugin_deadline_periods", s.optimizer.plugin_deadline_periods);
    }
    if (const auto c = root["control"]) {
      s.tolerances.position = get(c, "tolerance_pos", s.tolerances.position);
      if (c["tolerance_yaw_deg"]) s.tolerances.yaw = c["tolerance_yaw_deg"].as<double>() * kDeg;
      s.gains.position = get(c, "position_gain", s.gains.position);
      s.gains.yaw = get(c, "yaw_gain", s.gains.yaw);
      s.gains.tilt_cap = get(c, "tilt_cap", s.gains.tilt_cap);
      s.gains.yaw_cap = get(c, "yaw_cap", s.gains.yaw_cap);
      s.gains.stale_timeout = get(c, "stale_timeout", s.gains.stale_timeout);
    }
    if (const auto m = root["mesh"]) {
      s.mesh_link.range = get(m, "range", s.mesh_link.range);
      s.mesh_link.loss_probability = get(m, "loss", s.mesh_link.loss_probability);
      s.mesh_link.latency = get(m, "latency", s.mesh_link.latency);
      s.aodv.hello_enabled = get(m, "hello", s.aodv.hello_enabled);
      s.aodv.active_route_timeout = get(m, "active_route_timeout", s.aodv.active_route_timeout);
    }
    if (const auto n = root["control_network"]) s.control_latency_ticks = get(n, "latency_ticks", 0);
    if (const auto st = root["stop"]) {
      s.stop.ticks = get(st, "ticks", s.stop.ticks);
      s.stop.on_convergence = get(st, "on_convergence", s.stop.on_convergence);
    }
    s.reseed(s.seed);
    return s;
  }
};

}  // namespace

void Scenario::reseed(std::uint64_t s) {
  seed = s;
  arena.noise.seed = s;
  mesh_link.seed = s * 0x9e3779b97f4a7c15ULL + 1;
}

void Scenario::validate(const std::string& source) const {
  try {
    arena.validate();
  } catch (const std::invalid_argument& e) {
    fail(source, 0, e.what());
  }
  if (drones.empty()) fail(source, 0, "at least one drone is required");
  if (stop.ticks < 1) fail(source, 0, "stop.ticks must be positive");
  if (vision_period < arena.tick) fail(source, 0, "vision_period must be at least one arena tick");
  try {
    optimizer.camera.validate();
  } catch (const CoverageError& e) {
    fail(source, 0, e.what());
  }
  if (!(optimizer.grid.pitch > 0) || optimizer.grid.orientations < 1) fail(source, 0, "optimizer grid is empty");
  if (mesh_link.latency < 1) fail(source, 0, "mesh latency must be at least one tick");
  if (mesh_link.loss_probability < 0 || mesh_link.loss_probability > 1) fail(source, 0, "mesh loss must lie in [0, 1]");

  const auto bounds = arena.bounds();
  std::set<std::string> ids;
  const Hsv target_hsv = to_hsv(arena.render.target_color);
  std::vector<std::pair<std::string, double>> hues;
  for (const auto& d : drones) {
    if (!ids.insert(d.id).second) fail(source, d.line, "duplicate drone id '" + d.id + "'");
    if (d.id == kTargetTag) fail(source, d.line, "drone id 'target' is reserved");
    if (!bounds.contains(d.start.position()))
      fail(source, d.line, "drone '" + d.id + "' starts outside the arena");
    const Hsv hsv = to_hsv(d.color);
    if (hsv.s < 0.5 || hsv.v < 0.5)
      fail(source, d.line, "drone '" + d.id + "' color is too dull to track");
    if (hue_gap(hsv.h, target_hsv.h) < 45)
      fail(source, d.line, "drone '" + d.id + "' color is too close to the target color");
    for (const auto& [other, h] : hues)
      if (hue_gap(hsv.h, h) < 45)
        fail(source, d.line, "drone '" + d.id + "' color is too close to drone '" + other + "'");
    hues.emplace_back(d.id, hsv.h);
  }
  std::set<std::string> tids;
  for (const auto& t : targets) {
    if (!tids.insert(t.id).second) fail(source, t.line, "duplicate target id '" + t.id + "'");
    for (const auto& w : t.script)
      if (!bounds.contains(w.position)) fail(source, t.line, "target '" + t.id + "' leaves the arena");
  }
}

Scenario parse_scenario(const std::string& yaml, const std::string& source) {
  Scenario s;
  try {
    s = Parser{source}.parse(YAML::Load(yaml));
  } catch (const YAML::Exception& e) {
    fail(source, e.mark.line >= 0 ? e.mark.line + 1 : 0, e.msg);
  }
  s.validate(source);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path.string() + ": cannot open");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path.string());
}

}  // namespace una
