#include "una/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "una/placement.hpp"

namespace una {

namespace {

constexpr double kFrameEps = 1e-9;

// Command precedence within one tick: flight commands beat operator
// overrides, which beat the remote controller's stream.
enum Priority { kStream = 0, kOperator = 1, kFlight = 2 };

Json fix_json(const Detection& d) {
  return {{"x", d.world_position.x()}, {"y", d.world_position.y()}, {"t", d.timestamp}};
}

Detection fix_from(const std::string& id, const Json& j) {
  Detection d;
  d.tag = id;
  d.world_position = {j.at("x").get<double>(), j.at("y").get<double>()};
  d.timestamp = j.at("t").get<double>();
  return d;
}

Json points(const std::vector<Vector2>& pts) {
  Json out = Json::array();
  for (const auto& p : pts) out.push_back(to_json(p));
  return out;
}

std::vector<Vector2> points_from(const Json& j) {
  std::vector<Vector2> out;
  for (const auto& p : j) out.push_back(point_from_json(p));
  return out;
}

// Answers an off-loaded planning step at the central node.
class CentralOffload : public OffloadEndpoint {
 public:
  CentralOffload(ControlNetwork& net, std::string drone, std::int64_t now)
      : net_(net), drone_(std::move(drone)), now_(now) {}

  std::optional<Pose2D> offload(const LocalView& view) override {
    if (!net_.record(drone_, kCentral, MessageKind::kStateUpdate, {{"offload", to_json(view)}}, now_))
      return std::nullopt;
    const Pose2D pose = solve_distributed_step(view_from_json(to_json(view)));
    net_.record(kCentral, drone_, MessageKind::kSetObjectives, objectives_payload({{drone_, pose}}), now_);
    return pose;
  }

 private:
  ControlNetwork& net_;
  std::string drone_;
  std::int64_t now_;
};

}  // namespace

struct Testbed::Agent {
  std::string id;
  int rank = 0;
  NodeId node = 0;
  ControlMode mode = ControlMode::kAutopilot;
  ControllerState ctl;
  std::optional<Detection> fresh_fix;
  std::optional<Detection> last_fix;
  std::optional<AtCommand> pending;
  int pending_priority = -1;
  bool manual = false;

  std::uint64_t round = 0;
  bool round_open = false;
  std::int64_t round_start = 0;
  std::vector<Vector2> round_targets;
  std::map<std::string, std::vector<Vector2>> claims;

  void queue(const AtCommand& cmd, int priority) {
    if (priority < pending_priority) return;
    pending = cmd;
    pending_priority = priority;
  }
};

struct Testbed::CentralView {
  std::string id;
  ControlMode mode = ControlMode::kAutopilot;
  ControllerState ctl;  // runs only in remote mode
  std::optional<Detection> fix;
  bool fresh = false;
  double compass = 0;
  FlightPhase flight = FlightPhase::kLanded;
  std::string phase = "IDLE";
  double battery = 1;
  bool fault = false;
  bool manual = false;
  bool operator_command = false;
  std::optional<Pose2D> objective;
};

Testbed::Testbed(Scenario scenario)
    : scenario_(std::move(scenario)),
      control_(scenario_.control_latency_ticks),
      mesh_(scenario_.mesh_link, scenario_.aodv) {
  scenario_.validate(scenario_.name);
  std::vector<DroneState> drones;
  for (const auto& spec : scenario_.drones) {
    DroneState d;
    d.id = spec.id;
    d.tag = spec.color;
    d.pose = spec.start;
    drones.push_back(d);
  }
  std::vector<Target> targets;
  for (const auto& spec : scenario_.targets) {
    Target t;
    t.id = spec.id;
    t.script = spec.script;
    t.position = t.position_at(0);
    targets.push_back(t);
  }
  world_ = make_world(scenario_.arena, std::move(drones), std::move(targets));
  calibration_ = calibration_for(world_);

  auto specs = scenario_.drones;
  std::sort(specs.begin(), specs.end(), [](const DroneSpec& a, const DroneSpec& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto a = std::make_unique<Agent>();
    a->id = specs[i].id;
    a->rank = int(i);
    a->node = NodeId(i);
    a->mode = specs[i].mode;
    a->ctl.tolerances = scenario_.tolerances;
    auto c = std::make_unique<CentralView>();
    c->id = a->id;
    c->mode = a->mode;
    c->ctl.tolerances = scenario_.tolerances;
    c->compass = specs[i].start.yaw();
    control_.attach(a->id);
    mesh_.add_node(a->node, specs[i].start.position());
    mesh_ids_[a->id] = a->node;
    central_[a->id] = std::move(c);
    agents_.push_back(std::move(a));
  }
  mesh_.set_data_handler([this](NodeId at, const AodvPacket& p) {
    Json j = Json::parse(p.payload, nullptr, false);
    if (j.is_discarded() || !j.contains("claims")) return;
    for (auto& a : agents_) {
      if (a->node != at) continue;
      if (j.value("round", std::uint64_t{0}) == a->round) a->claims[j.value("from", "")] = points_from(j["claims"]);
    }
  });
  if (scenario_.autostart)
    for (const auto& a : agents_) forward(a->id, MessageKind::kTakeoff, Json::object());
}

Testbed::~Testbed() {
  std::lock_guard lock(queue_mutex_);
  for (auto& p : queue_) p.reply.set_value({false, "testbed shut down"});
}

void Testbed::forward(const std::string& drone, MessageKind kind, Json payload) {
  control_.send(kCentral, drone, kind, std::move(payload), tick());
}

std::future<Reply> Testbed::submit(WireMessage message) {
  Pending p{std::move(message), {}};
  auto f = p.reply.get_future();
  std::lock_guard lock(queue_mutex_);
  queue_.push_back(std::move(p));
  return f;
}

int Testbed::subscribe(Listener listener) {
  std::lock_guard lock(snapshot_mutex_);
  listeners_[next_listener_] = std::move(listener);
  return next_listener_++;
}

void Testbed::unsubscribe(int token) {
  std::lock_guard lock(snapshot_mutex_);
  listeners_.erase(token);
}

std::shared_ptr<const Snapshot> Testbed::latest() const {
  std::lock_guard lock(snapshot_mutex_);
  return latest_;
}

void Testbed::attach_plugin(OptimizerPlugin* plugin) {
  std::lock_guard lock(plugin_mutex_);
  plugin_ = plugin;
}

ControlPhase Testbed::phase(const std::string& drone) const {
  for (const auto& a : agents_)
    if (a->id == drone) return a->mode == ControlMode::kRemote ? central_.at(drone)->ctl.phase : a->ctl.phase;
  throw UnknownDroneError(drone);
}

ControlMode Testbed::mode(const std::string& drone) const {
  auto it = central_.find(drone);
  if (it == central_.end()) throw UnknownDroneError(drone);
  return it->second->mode;
}

std::optional<Pose2D> Testbed::objective(const std::string& drone) const {
  for (const auto& a : agents_) {
    if (a->id != drone) continue;
    const auto& ctl = a->mode == ControlMode::kRemote ? central_.at(drone)->ctl : a->ctl;
    if (ctl.objective) return ctl.objective->goal;
    return std::nullopt;
  }
  throw UnknownDroneError(drone);
}

bool Testbed::converged() const {
  if (!planned_) return false;
  const bool in_flight = control_.any_queued([](const Envelope& e) {
    return e.message.kind == MessageKind::kSetObjectives ||
           (e.message.kind == MessageKind::kStateUpdate && e.message.payload.contains("round"));
  });
  if (in_flight) return false;
  for (const auto& a : agents_) {
    if (a->round_open) return false;
    const auto& ctl = a->mode == ControlMode::kRemote ? central_.at(a->id)->ctl : a->ctl;
    if (ctl.objective && ctl.phase != ControlPhase::kDone) return false;
  }
  return true;
}

bool Testbed::finished() const {
  if (tick() >= scenario_.stop.ticks) return true;
  return scenario_.stop.on_convergence && converged();
}

void Testbed::run() {
  while (!finished()) step();
}

CameraModel Testbed::planning_camera() const {
  CameraModel cam = scenario_.optimizer.camera;
  if (!scenario_.optimizer.tolerance_margin) return cam;
  cam.fov = std::max(cam.fov - 2 * scenario_.tolerances.yaw, 1e-3);
  cam.r_min += scenario_.tolerances.position;
  cam.r_max = std::max(cam.r_max - scenario_.tolerances.position, cam.r_min + 1e-3);
  return cam;
}

int Testbed::covered_now() const {
  std::vector<Vector2> targets;
  for (const auto& t : world_.targets) targets.push_back(t.position);
  std::vector<Pose2D> poses;
  for (const auto& d : world_.drones)
    if (d.phase == FlightPhase::kFlying) poses.push_back(d.pose);
  return count_covered(targets, poses, scenario_.optimizer.camera);
}

CoverageInstance Testbed::instance_for(const std::vector<Vector2>& targets, bool skip_manual) const {
  CoverageInstance inst;
  inst.arena = scenario_.arena.bounds();
  inst.camera = planning_camera();
  inst.grid = scenario_.optimizer.grid;
  for (const auto& t : targets)
    inst.targets.emplace_back(std::clamp(t.x(), 0.0, inst.arena.width), std::clamp(t.y(), 0.0, inst.arena.height));
  for (const auto& [id, c] : central_) {
    if (!c->fix || c->flight != FlightPhase::kFlying || (skip_manual && c->manual)) continue;
    const Vector2 p = c->fix->world_position;
    inst.drones.push_back({id, Pose2D(std::clamp(p.x(), 0.0, inst.arena.width),
                                      std::clamp(p.y(), 0.0, inst.arena.height), c->compass)});
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Client messages

Reply Testbed::handle_client(const WireMessage& m) {
  const auto bounds = scenario_.arena.bounds();
  auto known = [&](const std::string& id) { return central_.count(id) > 0; };
  switch (m.kind) {
    case MessageKind::kSetObjectives: {
      const auto objectives = objectives_from_payload(m.payload);
      for (const auto& [id, goal] : objectives) {
        if (!known(id)) return {false, "unknown drone '" + id + "'"};
        if (!bounds.contains(goal.position())) return {false, "goal for '" + id + "' is outside the arena"};
      }
      Json applied = Json::array(), skipped = Json::array();
      for (const auto& [id, goal] : objectives) {
        if (central_[id]->manual) {
          skipped.push_back(id);
          continue;
        }
        dispatch_objective(id, goal);
        applied.push_back(id);
      }
      return {true, "", {{"applied", applied}, {"skipped", skipped}}};
    }
    case MessageKind::kManualCmd: {
      const auto id = m.payload["drone"].get<std::string>();
      if (!known(id)) return {false, "unknown drone '" + id + "'"};
      auto& c = *central_[id];
      if (m.payload.contains("goal")) {
        const Pose2D goal = pose_from_json(m.payload["goal"]);
        if (!bounds.contains(goal.position())) return {false, "goal for '" + id + "' is outside the arena"};
        c.manual = true;
        c.objective = goal;
        if (c.mode == ControlMode::kRemote)
          c.ctl = begin_objective(std::move(c.ctl), {id, goal, time()});
        else
          forward(id, MessageKind::kManualCmd, {{"drone", id}, {"goal", to_json(goal)}});
      } else if (m.payload.contains("command")) {
        const AtCommand cmd = command_from_json(m.payload["command"]);
        c.operator_command = true;
        forward(id, MessageKind::kManualCmd, {{"drone", id}, {"command", to_json(cmd)}});
      } else {
        c.manual = false;
        forward(id, MessageKind::kManualCmd, {{"drone", id}, {"release", true}});
      }
      return {};
    }
    case MessageKind::kTakeoff:
    case MessageKind::kLand: {
      std::vector<std::string> ids;
      if (m.payload.contains("drone")) {
        const auto id = m.payload["drone"].get<std::string>();
        if (!known(id)) return {false, "unknown drone '" + id + "'"};
        ids.push_back(id);
      } else {
        for (const auto& [id, c] : central_) ids.push_back(id);
      }
      if (m.kind == MessageKind::kTakeoff && halted_) {
        halted_ = false;
        planned_ = false;
      }
      for (const auto& id : ids) forward(id, m.kind, Json::object());
      return {};
    }
    case MessageKind::kEmergencyStop:
      halted_ = true;
      for (auto& [id, c] : central_) {
        c->ctl = ControllerState{};
        c->ctl.tolerances = scenario_.tolerances;
        c->manual = false;
        c->objective.reset();
        forward(id, MessageKind::kEmergencyStop, Json::object());
      }
      return {};
    default:
      return {false, std::string(to_string(m.kind)) + " is not accepted from clients"};
  }
}

void Testbed::dispatch_objective(const std::string& drone, const Pose2D& goal) {
  auto& c = *central_.at(drone);
  c.objective = goal;
  last_objectives_[drone] = goal;
  if (c.mode == ControlMode::kRemote)
    c.ctl = begin_objective(std::move(c.ctl), {drone, goal, time()});
  else
    forward(drone, MessageKind::kSetObjectives, objectives_payload({{drone, goal}}));
}

// ---------------------------------------------------------------------------
// Central node: localization, optimizer, remote controllers

void Testbed::vision_frame() {
  const TagScan scan = locate_tags(render_overhead(world_), calibration_, world_.time);
  ++frame_;
  std::vector<Detection> targets;
  for (const auto& d : scan.detections) {
    if (d.kind == TagKind::kTarget) {
      targets.push_back(d);
      continue;
    }
    auto it = central_.find(d.tag);
    if (it == central_.end()) continue;
    it->second->fix = d;
    it->second->fresh = true;
    forward(d.tag, MessageKind::kStateUpdate, {{"fix", fix_json(d)}});
  }
  last_targets_ = targets;
  if (!halted_) maybe_plan(targets);
  publish(scan);
  coverage_log_.push_back({tick(), time(), covered_now()});
}

void Testbed::maybe_plan(const std::vector<Detection>& detections) {
  bool any_ready = false, settling = false;
  for (const auto& [id, c] : central_) {
    if (c->flight == FlightPhase::kTakingOff) settling = true;
    if (c->flight == FlightPhase::kFlying && c->fix && !c->manual) any_ready = true;
  }
  if (settling || !any_ready) return;

  std::vector<Vector2> seen;
  for (const auto& d : detections) seen.push_back(d.world_position);
  if (!planned_) {
    plan(seen);
    return;
  }
  if (retry_in_frames_ > 0 && --retry_in_frames_ == 0) {
    plan(seen);
    return;
  }
  const double r = scenario_.optimizer.match_radius;
  bool unmatched = seen.size() > known_targets_.size();
  for (const auto& p : seen) {
    const bool matched = std::any_of(known_targets_.begin(), known_targets_.end(),
                                     [&](const Vector2& k) { return (k - p).norm() <= r; });
    unmatched = unmatched || !matched;
  }
  unmatched_streak_ = unmatched ? unmatched_streak_ + 1 : 0;
  if (unmatched_streak_ >= scenario_.optimizer.replan_frames) plan(seen);
}

void Testbed::plan(const std::vector<Vector2>& targets) {
  planned_ = true;
  unmatched_streak_ = 0;
  retry_in_frames_ = -1;
  known_targets_ = targets;

  PlanRecord rec;
  rec.tick = tick();
  rec.instance = instance_for(targets, true);
  const auto mode = scenario_.optimizer.mode;

  if (mode == OptimizerMode::kCentral) {
    if (scenario_.optimizer.external) {
      OptimizerPlugin* plugin = nullptr;
      {
        std::lock_guard lock(plugin_mutex_);
        plugin = plugin_;
      }
      std::optional<std::map<std::string, Pose2D>> reply;
      if (plugin) {
        Json state = latest() ? latest()->state : Json::object();
        state["instance"] = to_json(rec.instance);
        reply = plugin->request(state, scenario_.optimizer.plugin_deadline_periods * scenario_.vision_period);
      }
      if (!reply) {
        rec.timed_out = true;
        ++plugin_timeouts_;
        retry_in_frames_ = 20;
        plans_.push_back(std::move(rec));
        return;
      }
      rec.from_plugin = true;
      const auto bounds = scenario_.arena.bounds();
      for (const auto& [id, goal] : *reply)
        if (central_.count(id) && !central_[id]->manual && bounds.contains(goal.position())) rec.objectives[id] = goal;
    } else {
      rec.objectives = solve_central(rec.instance).assignments;
    }
    for (const auto& [id, goal] : rec.objectives) dispatch_objective(id, goal);
    plans_.push_back(std::move(rec));
    return;
  }

  // Distributed and emulation: each drone plans for itself once it has its
  // predecessors' claims.
  ++round_;
  plans_.push_back(std::move(rec));
  for (const auto& a : agents_) {
    if (central_[a->id]->flight != FlightPhase::kFlying) continue;
    forward(a->id, MessageKind::kStateUpdate, {{"round", round_}, {"targets", points(known_targets_)}});
  }
}

void Testbed::remote_commands() {
  for (auto& [id, c] : central_) {
    if (c->mode != ControlMode::kRemote) continue;
    const bool fresh = c->fresh;
    c->fresh = false;
    if (c->operator_command) {
      c->operator_command = false;
      continue;
    }
    if (c->flight != FlightPhase::kFlying) continue;
    auto out = control_tick(std::move(c->ctl), fresh ? c->fix : std::nullopt, c->compass, time(), scenario_.gains);
    c->ctl = std::move(out.state);
    forward(id, MessageKind::kManualCmd, {{"drone", id}, {"command", to_json(out.command)}, {"stream", true}});
  }
}

// ---------------------------------------------------------------------------
// Drone side

void Testbed::agent_receive(Agent& a) {
  for (const auto& e : control_.receive(a.id, tick())) {
    const auto& p = e.message.payload;
    switch (e.message.kind) {
      case MessageKind::kStateUpdate:
        if (p.contains("fix")) {
          a.fresh_fix = fix_from(a.id, p["fix"]);
          a.last_fix = a.fresh_fix;
        }
        if (p.contains("round")) {
          a.round = p["round"].get<std::uint64_t>();
          a.round_open = true;
          a.round_start = tick();
          a.round_targets = points_from(p["targets"]);
          a.claims.clear();
        }
        break;
      case MessageKind::kSetObjectives:
        if (!a.manual)
          for (const auto& [id, goal] : objectives_from_payload(p))
            if (id == a.id) a.ctl = begin_objective(std::move(a.ctl), {a.id, goal, time()});
        break;
      case MessageKind::kManualCmd:
        if (p.contains("goal")) {
          a.manual = true;
          a.ctl = begin_objective(std::move(a.ctl), {a.id, pose_from_json(p["goal"]), time()});
        } else if (p.contains("command")) {
          a.queue(command_from_json(p["command"]), p.value("stream", false) ? kStream : kOperator);
        } else {
          a.manual = false;
        }
        break;
      case MessageKind::kTakeoff:
        a.queue(AtCommand::takeoff(), kFlight);
        break;
      case MessageKind::kLand:
        a.queue(AtCommand::land(), kFlight);
        break;
      case MessageKind::kEmergencyStop: {
        a.queue(AtCommand::land(), kFlight);
        ControllerState cleared;
        cleared.tolerances = a.ctl.tolerances;
        cleared.last_fix = a.ctl.last_fix;
        a.ctl = cleared;
        a.manual = false;
        a.round_open = false;
        break;
      }
      default:
        break;
    }
  }
}

void Testbed::agent_plan(Agent& a) {
  if (!a.round_open || !a.last_fix) return;
  bool ready = true;
  for (const auto& other : agents_)
    if (other->rank < a.rank && !a.claims.count(other->id)) ready = false;
  if (!ready && tick() < a.round_start + std::int64_t(scenario_.optimizer.claim_timeout_ticks) * a.rank) return;
  a.round_open = false;

  const DroneState& d = *world_.find_drone(a.id);
  LocalView view;
  view.drone = a.id;
  view.pose = Pose2D(a.last_fix->world_position, d.compass_yaw);
  view.targets = a.round_targets;
  for (const auto& [from, cl] : a.claims) view.claimed.insert(view.claimed.end(), cl.begin(), cl.end());
  view.arena = scenario_.arena.bounds();
  view.camera = planning_camera();
  view.grid = scenario_.optimizer.grid;

  Pose2D goal = view.pose;
  if (a.manual) {
    if (a.ctl.objective) goal = a.ctl.objective->goal;
  } else if (scenario_.optimizer.mode == OptimizerMode::kEmulation) {
    CentralOffload endpoint(control_, a.id, tick());
    const auto r = solve_emulated(view, endpoint);
    if (r.degraded) ++degraded_offloads_;
    goal = r.pose;
  } else {
    goal = solve_distributed_step(view);
  }

  if (!a.manual) {
    if (a.mode == ControlMode::kRemote)
      control_.send(a.id, kCentral, MessageKind::kSetObjectives, objectives_payload({{a.id, goal}}), tick());
    else
      a.ctl = begin_objective(std::move(a.ctl), {a.id, goal, time()});
    if (!plans_.empty()) plans_.back().objectives[a.id] = goal;
  }

  const Json claim{{"round", a.round}, {"from", a.id}, {"claims", points(claims_for(a.round_targets, goal, view.camera))}};
  const std::string payload = claim.dump();
  for (const auto& other : agents_) {
    if (other->rank <= a.rank) continue;
    mesh_.send_data(a.node, other->node, payload);
    mesh_payloads_.push_back(payload);
  }
}

AtCommand Testbed::agent_command(Agent& a, const DroneState& d) {
  AtCommand cmd = AtCommand::hover();
  const auto fix = a.fresh_fix;
  a.fresh_fix.reset();
  if (a.pending) {
    cmd = *a.pending;
    a.pending.reset();
    a.pending_priority = -1;
    if (fix) a.ctl.last_fix = fix;
    return cmd;
  }
  if (d.phase != FlightPhase::kFlying || a.mode == ControlMode::kRemote) return cmd;
  auto out = control_tick(std::move(a.ctl), fix, d.compass_yaw, time(), scenario_.gains);
  a.ctl = std::move(out.state);
  if (a.ctl.fault == ControlFault::kLostTracking) ++lost_tracking_ticks_;
  return out.command;
}

// ---------------------------------------------------------------------------

void Testbed::step() {
  std::deque<Pending> pending;
  {
    std::lock_guard lock(queue_mutex_);
    pending.swap(queue_);
  }
  for (auto& p : pending) {
    try {
      p.reply.set_value(handle_client(p.message));
    } catch (const std::exception& e) {
      p.reply.set_value({false, e.what()});
    }
  }

  for (const auto& e : control_.receive(kCentral, tick())) {
    auto& c = *central_.at(e.from);
    const auto& p = e.message.payload;
    if (e.message.kind == MessageKind::kStateUpdate && p.contains("compass")) {
      c.compass = p["compass"].get<double>();
      c.battery = p["battery"].get<double>();
      const auto flight = p["flight"].get<std::string>();
      for (auto f : {FlightPhase::kLanded, FlightPhase::kTakingOff, FlightPhase::kFlying, FlightPhase::kLanding})
        if (flight == to_string(f)) c.flight = f;
      c.phase = p["phase"].get<std::string>();
      c.fault = p["fault"].get<bool>();
    } else if (e.message.kind == MessageKind::kSetObjectives && !c.manual) {
      for (const auto& [id, goal] : objectives_from_payload(p)) {
        c.objective = goal;
        c.ctl = begin_objective(std::move(c.ctl), {id, goal, time()});
      }
    }
  }

  frame_this_tick_ = false;
  if (world_.time + kFrameEps >= next_frame_) {
    vision_frame();
    next_frame_ += scenario_.vision_period;
    frame_this_tick_ = true;
  }
  remote_commands();

  for (auto& a : agents_) agent_receive(*a);
  for (auto& a : agents_) agent_plan(*a);
  CommandMap commands;
  for (auto& a : agents_) {
    const DroneState& d = *world_.find_drone(a->id);
    const AtCommand cmd = agent_command(*a, d);
    commands[a->id] = cmd;
    const auto& ctl = a->mode == ControlMode::kRemote ? central_[a->id]->ctl : a->ctl;
    control_trace_.push_back({time(), a->id, ctl.phase, d.pose, cmd});
  }

  world_ = una::step(std::move(world_), commands, scenario_.arena.tick);

  for (const auto& a : agents_) {
    if (a->mode != ControlMode::kRemote && !frame_this_tick_) continue;
    const DroneState& d = *world_.find_drone(a->id);
    const auto& ctl = a->mode == ControlMode::kRemote ? central_[a->id]->ctl : a->ctl;
    control_.send(a->id, kCentral, MessageKind::kStateUpdate,
                  {{"compass", d.compass_yaw},
                   {"battery", d.battery},
                   {"flight", to_string(d.phase)},
                   {"phase", to_string(ctl.phase)},
                   {"fault", ctl.fault != ControlFault::kNone}},
                  tick());
  }

  for (const auto& a : agents_) mesh_.set_position(a->node, world_.find_drone(a->id)->pose.position());
  mesh_.advance();
}

void Testbed::publish(const TagScan& scan) {
  Json drones = Json::array();
  std::vector<Pose2D> estimates;
  for (const auto& [id, c] : central_) {
    Json d{{"id", id},
           {"tracked", std::find(scan.missing.begin(), scan.missing.end(), id) == scan.missing.end()},
           {"flight", to_string(c->flight)},
           {"mode", to_string(c->mode)},
           {"phase", c->mode == ControlMode::kRemote ? to_string(c->ctl.phase) : c->phase},
           {"battery", c->battery},
           {"fault", c->fault},
           {"manual", c->manual},
           {"yaw", c->compass},
           {"objective", c->objective ? to_json(*c->objective) : Json()}};
    if (c->fix) {
      d["x"] = c->fix->world_position.x();
      d["y"] = c->fix->world_position.y();
      if (c->flight == FlightPhase::kFlying) estimates.emplace_back(c->fix->world_position, c->compass);
    }
    drones.push_back(d);
  }
  std::vector<Vector2> seen;
  for (const auto& d : last_targets_) seen.push_back(d.world_position);
  const auto& cam = scenario_.optimizer.camera;

  auto snap = std::make_shared<Snapshot>();
  snap->frame = frame_;
  snap->tick = tick();
  snap->time = time();
  snap->world = std::make_shared<const WorldState>(world_);
  snap->state = {{"time", time()},
                 {"tick", tick()},
                 {"frame", frame_},
                 {"arena", {{"width", scenario_.arena.width}, {"height", scenario_.arena.height}}},
                 {"camera", {{"fov", cam.fov}, {"r_min", cam.r_min}, {"r_max", cam.r_max}}},
                 {"optimizer", to_string(scenario_.optimizer.mode)},
                 {"halted", halted_},
                 {"drones", drones},
                 {"targets", points(seen)},
                 {"covered_count", count_covered(seen, estimates, cam)}};

  std::vector<Listener> listeners;
  {
    std::lock_guard lock(snapshot_mutex_);
    latest_ = snap;
    for (const auto& [token, l] : listeners_) listeners.push_back(l);
  }
  for (const auto& l : listeners) l(snap);
}

// ---------------------------------------------------------------------------
// Reporting

SeparationAudit Testbed::audit() const { return audit_separation(control_, mesh_payloads_, mesh_.trace().size()); }

std::vector<Plateau> Testbed::plateaus() const {
  const double end = time();
  std::vector<std::pair<double, double>> moves;
  for (const auto& t : scenario_.targets)
    for (std::size_t i = 1; i < t.script.size(); ++i)
      if (t.script[i].position != t.script[i - 1].position) moves.emplace_back(t.script[i - 1].time, t.script[i].time);
  std::sort(moves.begin(), moves.end());

  std::vector<std::pair<double, double>> rest;
  double cursor = 0;
  for (const auto& [s, e] : moves) {
    if (s > cursor) rest.emplace_back(cursor, s);
    cursor = std::max(cursor, e);
  }
  if (end > cursor) rest.emplace_back(cursor, end);

  std::vector<Plateau> out;
  for (const auto& [s, e] : rest) {
    const bool last = e >= end;
    std::optional<int> covered;
    for (const auto& sample : coverage_log_)
      if (sample.time >= s && (sample.time < e || (last && sample.time <= e))) covered = sample.covered;
    if (covered) out.push_back({s, std::min(e, end), *covered});
  }
  return out;
}

std::vector<std::string> Testbed::faults() const {
  std::vector<std::string> out;
  for (const auto& a : agents_) {
    const auto& ctl = a->mode == ControlMode::kRemote ? central_.at(a->id)->ctl : a->ctl;
    if (ctl.fault == ControlFault::kLostTracking) out.push_back("drone '" + a->id + "' lost tracking");
  }
  for (const auto& v : audit().violations) out.push_back(v);
  return out;
}

Json Testbed::summary() const {
  Json drones = Json::array();
  for (const auto& a : agents_) {
    const DroneState& d = *world_.find_drone(a->id);
    const auto goal = objective(a->id);
    drones.push_back({{"id", a->id},
                      {"mode", to_string(a->mode)},
                      {"flight", to_string(d.phase)},
                      {"phase", to_string(phase(a->id))},
                      {"pose", to_json(d.pose)},
                      {"objective", goal ? to_json(*goal) : Json()},
                      {"placement_error", goal ? Json((goal->position() - d.pose.position()).norm()) : Json()}});
  }
  Json targets = Json::array();
  for (const auto& t : world_.targets) targets.push_back({{"id", t.id}, {"position", to_json(t.position)}});
  Json plateaus_json = Json::array();
  for (const auto& p : plateaus()) plateaus_json.push_back({{"start", p.start}, {"end", p.end}, {"covered_count", p.covered}});
  const auto audit_result = audit();
  return {{"scenario", scenario_.name},
          {"seed", scenario_.seed},
          {"ticks", tick()},
          {"time", time()},
          {"frames", frame_},
          {"optimizer", to_string(scenario_.optimizer.mode)},
          {"drones", drones},
          {"targets", targets},
          {"covered_count", covered_now()},
          {"plateaus", plateaus_json},
          {"plans", plans_.size()},
          {"plugin_timeouts", plugin_timeouts_},
          {"degraded_offloads", degraded_offloads_},
          {"lost_tracking_ticks", lost_tracking_ticks_},
          {"control_messages", control_.log().size()},
          {"mesh_packets", mesh_.trace().size()},
          {"networks_separated", audit_result.clean()},
          {"faults", faults()}};
}

void Testbed::write_artifacts(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "summary.json");
    out << summary().dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "control_trace.csv");
    write_control_trace_csv(out, control_trace_);
  }
  {
    std::ofstream out(dir / "packet_trace.csv");
    write_packet_trace_csv(out, mesh_.trace());
  }
  {
    std::ofstream out(dir / "coverage.csv");
    out << std::setprecision(9) << "tick,time,covered_count\n";
    for (const auto& s : coverage_log_) out << s.tick << ',' << s.time << ',' << s.covered << '\n';
  }
  {
    std::ofstream out(dir / "control_log.csv");
    out << "tick,from,to,id,kind\n";
    for (const auto& e : control_.log())
      out << e.sent_tick << ',' << e.from << ',' << e.to << ',' << e.message.id << ',' << to_string(e.message.kind)
          << '\n';
  }
}

}  // namespace una
