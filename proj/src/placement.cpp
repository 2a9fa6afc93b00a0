#include "una/placement.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace una {

Calibration calibration_for(const WorldState& world) {
  Calibration cal;
  cal.meters_per_pixel_x = world.config.meters_per_pixel_x();
  cal.meters_per_pixel_y = world.config.meters_per_pixel_y();
  for (const auto& d : world.drones) cal.tags.push_back({d.id, TagKind::kDrone, ColorRange::around(d.tag)});
  if (!world.targets.empty())
    cal.tags.push_back({kTargetTag, TagKind::kTarget, ColorRange::around(world.config.render.target_color)});
  return cal;
}

PlacementResult run_placement(const PlacementRun& run) {
  DroneState drone;
  drone.id = "d1";
  drone.tag = Rgb{230, 60, 40};
  drone.pose = run.start;
  drone.phase = FlightPhase::kFlying;
  WorldState world = make_world(run.arena, {drone}, {});
  const Calibration cal = calibration_for(world);

  ControllerState ctl;
  ctl.tolerances = run.tolerances;
  ctl = begin_objective(std::move(ctl), Objective{drone.id, run.goal, 0.0});

  PlacementResult result;
  double next_frame = 0;
  const double eps = 1e-9;
  for (int t = 0; t < run.max_ticks; ++t) {
    std::optional<Detection> fix;
    if (world.time + eps >= next_frame) {
      auto scan = locate_tags(render_overhead(world), cal, world.time);
      if (!scan.detections.empty()) fix = scan.detections.front();
      next_frame += run.vision_period;
    }
    const DroneState& d = *world.find_drone(drone.id);
    auto out = control_tick(std::move(ctl), fix, d.compass_yaw, world.time, run.gains);
    ctl = std::move(out.state);
    if (run.record_trace) result.trace.push_back({world.time, d.id, ctl.phase, d.pose, out.command});
    if (ctl.phase == ControlPhase::kDone) {
      result.reached = true;
      result.ticks = t;
      break;
    }
    world = step(std::move(world), {{drone.id, out.command}}, run.arena.tick);
    result.ticks = t + 1;
  }
  result.phases = ctl.trace;
  result.final_pose = world.find_drone(drone.id)->pose;
  if (ctl.last_fix) {
    result.final_fix = *ctl.last_fix;
    result.error = measure_placement_error(run.goal, *ctl.last_fix);
  }
  return result;
}

std::vector<double> ExperimentRecord::sorted_errors() const {
  std::vector<double> out;
  for (const auto& t : trials)
    if (!t.timed_out) out.push_back(t.error);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<double, double>> ExperimentRecord::cdf() const {
  const auto errors = sorted_errors();
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < errors.size(); ++i)
    out.emplace_back(errors[i], double(i + 1) / double(errors.size()));
  return out;
}

namespace {

std::string digest(const BenchmarkConfig& c) {
  std::ostringstream s;
  s << std::setprecision(17) << c.arena.width << ' ' << c.arena.height << ' ' << c.arena.tick << ' '
    << c.arena.tilt_gain << ' ' << c.arena.drag << ' ' << c.arena.v_max << ' ' << c.noise.compass_std << ' '
    << c.noise.actuation_std << ' ' << c.noise.render_std << ' ' << c.goal.x() << ' ' << c.goal.y() << ' '
    << c.goal.yaw() << ' ' << c.max_ticks << ' ' << c.start_margin;
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

}  // namespace

ExperimentRecord run_placement_benchmark(const BenchmarkConfig& config) {
  if (config.trials < 1) throw std::invalid_argument("trials must be at least 1");
  config.arena.validate();
  if (!config.arena.bounds().contains(config.goal.position()))
    throw std::invalid_argument("goal outside arena bounds");

  ExperimentRecord record;
  record.scenario = config.scenario;
  record.seed = config.noise.seed;
  record.config_digest = digest(config);
  for (int i = 0; i < config.trials; ++i) {
    const std::uint64_t seed = config.noise.seed + std::uint64_t(i);
    std::mt19937_64 rng(seed);
    const double m = config.start_margin;
    std::uniform_real_distribution<double> ux(m, config.arena.width - m), uy(m, config.arena.height - m),
        ua(-std::numbers::pi, std::numbers::pi);
    const double sx = ux(rng), sy = uy(rng), syaw = ua(rng);

    PlacementRun run;
    run.arena = config.arena;
    run.arena.noise = config.noise;
    run.arena.noise.seed = seed;
    run.start = Pose2D(sx, sy, syaw);
    run.goal = config.goal;
    run.max_ticks = config.max_ticks;
    const auto r = run_placement(run);

    TrialRecord t;
    t.trial = i;
    t.seed = seed;
    t.start = run.start;
    t.goal = run.goal;
    t.final_fix = r.final_fix;
    t.error = r.error;
    t.ticks = r.ticks;
    t.timed_out = !r.reached;
    record.trials.push_back(t);
  }
  return record;
}

void write_benchmark_csv(std::ostream& out, const ExperimentRecord& record) {
  out << std::setprecision(9);
  out << "trial,error_m\n";
  for (const auto& t : record.trials) {
    out << t.trial << ',';
    if (t.timed_out)
      out << "timeout";
    else
      out << t.error;
    out << '\n';
  }
  out << "\ncdf_x,cdf_y\n";
  for (const auto& [x, y] : record.cdf()) out << x << ',' << y << '\n';
}

}  // namespace una
