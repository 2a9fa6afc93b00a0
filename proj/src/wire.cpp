#include "una/wire.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace una {

namespace {

constexpr std::array<std::pair<MessageKind, const char*>, 9> kKinds{{
    {MessageKind::kStateUpdate, "STATE_UPDATE"},
    {MessageKind::kSetObjectives, "SET_OBJECTIVES"},
    {MessageKind::kManualCmd, "MANUAL_CMD"},
    {MessageKind::kTakeoff, "TAKEOFF"},
    {MessageKind::kLand, "LAND"},
    {MessageKind::kEmergencyStop, "EMERGENCY_STOP"},
    {MessageKind::kFrameRequest, "FRAME_REQUEST"},
    {MessageKind::kAck, "ACK"},
    {MessageKind::kFault, "FAULT"},
}};

double finite_number(const Json& j, const char* field) {
  if (!j.is_object() || !j.contains(field) || !j[field].is_number())
    throw WireError(std::string("field '") + field + "' must be a number");
  const double v = j[field].get<double>();
  if (!std::isfinite(v)) throw WireError(std::string("field '") + field + "' must be finite");
  return v;
}

const std::string& string_field(const Json& j, const char* field) {
  if (!j.is_object() || !j.contains(field) || !j[field].is_string())
    throw WireError(std::string("field '") + field + "' must be a string");
  return j[field].get_ref<const std::string&>();
}

}  // namespace

const char* to_string(MessageKind kind) {
  for (const auto& [k, name] : kKinds)
    if (k == kind) return name;
  return "?";
}

MessageKind message_kind_from_string(std::string_view s) {
  for (const auto& [k, name] : kKinds)
    if (s == name) return k;
  throw WireError("unknown message kind '" + std::string(s) + "'");
}

std::string encode(const WireMessage& m) {
  Json j{{"id", m.id}, {"kind", to_string(m.kind)}, {"sender", m.sender}, {"payload", m.payload}};
  return j.dump();
}

WireMessage decode(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw WireError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw WireError("message must be a JSON object");
  if (!j.contains("id") || !j["id"].is_number_unsigned()) throw WireError("field 'id' must be a non-negative integer");
  WireMessage m;
  m.id = j["id"].get<std::uint64_t>();
  m.kind = message_kind_from_string(string_field(j, "kind"));
  m.sender = j.contains("sender") ? string_field(j, "sender") : std::string();
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) throw WireError("field 'payload' must be an object");
    m.payload = j["payload"];
  }
  validate_payload(m.kind, m.payload);
  return m;
}

void validate_payload(MessageKind kind, const Json& p) {
  switch (kind) {
    case MessageKind::kSetObjectives:
      if (!p.contains("objectives") || !p["objectives"].is_array())
        throw WireError("SET_OBJECTIVES needs an 'objectives' array");
      for (const auto& o : p["objectives"]) {
        string_field(o, "drone");
        pose_from_json(o);
      }
      break;
    case MessageKind::kManualCmd: {
      string_field(p, "drone");
      const int forms = int(p.contains("goal")) + int(p.contains("command")) + int(p.contains("release"));
      if (forms != 1) throw WireError("MANUAL_CMD needs exactly one of 'goal', 'command', 'release'");
      if (p.contains("goal")) pose_from_json(p["goal"]);
      if (p.contains("command")) command_from_json(p["command"]);
      if (p.contains("release") && !p["release"].is_boolean()) throw WireError("field 'release' must be a boolean");
      break;
    }
    case MessageKind::kTakeoff:
    case MessageKind::kLand:
      if (p.contains("drone")) string_field(p, "drone");
      break;
    case MessageKind::kAck:
      if (!p.contains("ref") || !p["ref"].is_number_unsigned()) throw WireError("ACK needs a 'ref' id");
      break;
    case MessageKind::kFault:
      string_field(p, "reason");
      break;
    case MessageKind::kStateUpdate:
    case MessageKind::kEmergencyStop:
    case MessageKind::kFrameRequest:
      break;
  }
}

WireMessage make_ack(std::uint64_t id, std::string sender, std::uint64_t ref, Json extra) {
  extra["ref"] = ref;
  return {id, MessageKind::kAck, std::move(sender), std::move(extra)};
}

WireMessage make_fault(std::uint64_t id, std::string sender, std::string reason, std::optional<std::uint64_t> ref) {
  Json p{{"reason", std::move(reason)}};
  if (ref) p["ref"] = *ref;
  return {id, MessageKind::kFault, std::move(sender), std::move(p)};
}

Json to_json(const Vector2& p) { return Json::array({p.x(), p.y()}); }

Vector2 point_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw WireError("point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Json to_json(const Pose2D& p) { return {{"x", p.x()}, {"y", p.y()}, {"yaw", p.yaw()}}; }

Pose2D pose_from_json(const Json& j) {
  return Pose2D(finite_number(j, "x"), finite_number(j, "y"), finite_number(j, "yaw"));
}

Json to_json(const AtCommand& c) {
  Json j{{"kind", to_string(c.kind)}};
  if (c.kind == AtCommand::Kind::kProgressive) {
    j["roll"] = c.roll;
    j["pitch"] = c.pitch;
    j["gaz"] = c.gaz;
    j["yaw_rate"] = c.yaw_rate;
  }
  return j;
}

AtCommand command_from_json(const Json& j) {
  const auto& kind = string_field(j, "kind");
  if (kind == "TAKEOFF") return AtCommand::takeoff();
  if (kind == "LAND") return AtCommand::land();
  if (kind == "HOVER") return AtCommand::hover();
  if (kind != "PROGRESSIVE") throw WireError("unknown command kind '" + kind + "'");
  try {
    return AtCommand::progressive(finite_number(j, "roll"), finite_number(j, "pitch"), finite_number(j, "gaz"),
                                  finite_number(j, "yaw_rate"));
  } catch (const std::out_of_range&) {
    throw WireError("command setpoints must lie in [-1, 1]");
  }
}

Json to_json(const CoverageInstance& inst) {
  Json targets = Json::array(), drones = Json::array();
  for (const auto& t : inst.targets) targets.push_back(to_json(t));
  for (const auto& d : inst.drones) drones.push_back({{"id", d.id}, {"pose", to_json(d.pose)}});
  return {{"arena", {{"width", inst.arena.width}, {"height", inst.arena.height}}},
          {"camera", {{"fov", inst.camera.fov}, {"r_min", inst.camera.r_min}, {"r_max", inst.camera.r_max}}},
          {"grid", {{"pitch", inst.grid.pitch}, {"orientations", inst.grid.orientations}}},
          {"targets", targets},
          {"drones", drones}};
}

namespace {

void read_common(const Json& j, Bounds& arena, CameraModel& camera, CandidateGrid& grid) {
  const auto& a = j.at("arena");
  arena = {finite_number(a, "width"), finite_number(a, "height")};
  const auto& c = j.at("camera");
  camera = {finite_number(c, "fov"), finite_number(c, "r_min"), finite_number(c, "r_max")};
  const auto& g = j.at("grid");
  grid.pitch = finite_number(g, "pitch");
  if (!g.contains("orientations") || !g["orientations"].is_number_integer())
    throw WireError("field 'orientations' must be an integer");
  grid.orientations = g["orientations"].get<int>();
}

Json common_json(const Bounds& arena, const CameraModel& camera, const CandidateGrid& grid) {
  return {{"arena", {{"width", arena.width}, {"height", arena.height}}},
          {"camera", {{"fov", camera.fov}, {"r_min", camera.r_min}, {"r_max", camera.r_max}}},
          {"grid", {{"pitch", grid.pitch}, {"orientations", grid.orientations}}}};
}

std::vector<Vector2> points_from(const Json& j) {
  if (!j.is_array()) throw WireError("expected a list of points");
  std::vector<Vector2> out;
  for (const auto& p : j) out.push_back(point_from_json(p));
  return out;
}

Json points_json(const std::vector<Vector2>& pts) {
  Json out = Json::array();
  for (const auto& p : pts) out.push_back(to_json(p));
  return out;
}

}  // namespace

CoverageInstance instance_from_json(const Json& j) {
  try {
    CoverageInstance inst;
    read_common(j, inst.arena, inst.camera, inst.grid);
    inst.targets = points_from(j.at("targets"));
    for (const auto& d : j.at("drones")) inst.drones.push_back({string_field(d, "id"), pose_from_json(d.at("pose"))});
    return inst;
  } catch (const Json::exception& e) {
    throw WireError(std::string("bad instance: ") + e.what());
  }
}

Json to_json(const TagScan& scan) {
  Json detections = Json::array();
  for (const auto& d : scan.detections)
    detections.push_back({{"tag", d.tag},
                          {"kind", d.kind == TagKind::kTarget ? "target" : "drone"},
                          {"u", d.pixel_centroid.x()},
                          {"v", d.pixel_centroid.y()},
                          {"x", d.world_position.x()},
                          {"y", d.world_position.y()},
                          {"area", d.area}});
  return {{"detections", detections}, {"missing", scan.missing}};
}

Json to_json(const Directive& d) {
  Json assignments = Json::object();
  for (const auto& [id, pose] : d.assignments) assignments[id] = to_json(pose);
  return {{"assignments", assignments}, {"covered_count", d.covered_count}};
}

Directive directive_from_json(const Json& j) {
  Directive d;
  try {
    for (const auto& [id, pose] : j.at("assignments").items()) d.assignments[id] = pose_from_json(pose);
    d.covered_count = j.at("covered_count").get<int>();
  } catch (const Json::exception& e) {
    throw WireError(std::string("bad directive: ") + e.what());
  }
  return d;
}

Json to_json(const LocalView& v) {
  Json j = common_json(v.arena, v.camera, v.grid);
  j["drone"] = v.drone;
  j["pose"] = to_json(v.pose);
  j["targets"] = points_json(v.targets);
  j["claimed"] = points_json(v.claimed);
  return j;
}

LocalView view_from_json(const Json& j) {
  try {
    LocalView v;
    read_common(j, v.arena, v.camera, v.grid);
    v.drone = string_field(j, "drone");
    v.pose = pose_from_json(j.at("pose"));
    v.targets = points_from(j.at("targets"));
    v.claimed = points_from(j.at("claimed"));
    return v;
  } catch (const Json::exception& e) {
    throw WireError(std::string("bad view: ") + e.what());
  }
}

Json objectives_payload(const std::map<std::string, Pose2D>& assignments) {
  Json list = Json::array();
  for (const auto& [id, pose] : assignments) {
    Json o = to_json(pose);
    o["drone"] = id;
    list.push_back(o);
  }
  return {{"objectives", list}};
}

std::map<std::string, Pose2D> objectives_from_payload(const Json& payload) {
  validate_payload(MessageKind::kSetObjectives, payload);
  std::map<std::string, Pose2D> out;
  for (const auto& o : payload["objectives"]) out[o["drone"].get<std::string>()] = pose_from_json(o);
  return out;
}

}  // namespace una
