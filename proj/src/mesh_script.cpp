#include "una/mesh_script.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

namespace una {

namespace {

using Json = nlohmann::json;

[[noreturn]] void fail(const std::string& source, const YAML::Node& n, const std::string& what) {
  const int line = n && n.Mark().line >= 0 ? n.Mark().line + 1 : 0;
  throw std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + what : source + ": " + what);
}

Vector2 point(const std::string& source, const YAML::Node& n, const char* what) {
  if (!n || !n.IsSequence() || n.size() != 2) fail(source, n, std::string(what) + " must be [x, y]");
  return {n[0].as<double>(), n[1].as<double>()};
}

std::pair<NodeId, NodeId> pair_of(const std::string& source, const YAML::Node& n, const char* what) {
  if (!n.IsSequence() || n.size() != 2) fail(source, n, std::string(what) + " must be [source, destination]");
  return {n[0].as<NodeId>(), n[1].as<NodeId>()};
}

const char* status_name(DiscoveryStatus s) {
  switch (s) {
    case DiscoveryStatus::kFound: return "found";
    case DiscoveryStatus::kFailed: return "failed";
    case DiscoveryStatus::kPending: return "pending";
    case DiscoveryStatus::kNone: break;
  }
  return "none";
}

const char* status_name(DataStatus s) {
  switch (s) {
    case DataStatus::kDelivered: return "delivered";
    case DataStatus::kFailed: return "failed";
    case DataStatus::kPending: break;
  }
  return "pending";
}

Json path_of(const Mesh& mesh, NodeId source, NodeId dest) {
  Json path = Json::array({source});
  NodeId at = source;
  for (std::size_t guard = 0; at != dest && guard <= mesh.nodes().size(); ++guard) {
    const auto r = mesh.route(at, dest);
    if (!r) return Json();
    at = r->next_hop;
    path.push_back(at);
  }
  return at == dest ? path : Json();
}

}  // namespace

MeshScript parse_mesh_script(const std::string& yaml, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    throw std::runtime_error(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) fail(source, root, "expected a mapping at top level");
  MeshScript s;
  try {
    if (auto l = root["link"]) {
      s.link.range = l["range"].as<double>(s.link.range);
      s.link.loss_probability = l["loss"].as<double>(s.link.loss_probability);
      s.link.latency = l["latency"].as<int>(s.link.latency);
      s.link.seed = l["seed"].as<std::uint64_t>(s.link.seed);
    }
    if (auto a = root["aodv"]) {
      s.aodv.active_route_timeout = a["active_route_timeout"].as<int>(s.aodv.active_route_timeout);
      s.aodv.discovery_timeout = a["discovery_timeout"].as<int>(s.aodv.discovery_timeout);
      s.aodv.rreq_retries = a["rreq_retries"].as<int>(s.aodv.rreq_retries);
      s.aodv.hello_enabled = a["hello"].as<bool>(s.aodv.hello_enabled);
      s.aodv.hello_interval = a["hello_interval"].as<int>(s.aodv.hello_interval);
    }
    const auto nodes = root["nodes"];
    if (!nodes || !nodes.IsSequence() || nodes.size() == 0) fail(source, root, "'nodes' must be a non-empty list");
    for (const auto& n : nodes) {
      if (!n["id"]) fail(source, n, "node entry needs an 'id'");
      const NodeId id = n["id"].as<NodeId>();
      if (std::any_of(s.nodes.begin(), s.nodes.end(), [&](const auto& e) { return e.first == id; }))
        fail(source, n, "duplicate node id " + std::to_string(id));
      s.nodes.emplace_back(id, point(source, n["position"], "node position"));
    }
    auto known = [&](NodeId id, const YAML::Node& at) {
      if (std::none_of(s.nodes.begin(), s.nodes.end(), [&](const auto& e) { return e.first == id; }))
        fail(source, at, "unknown node " + std::to_string(id));
    };
    for (const auto& e : root["events"]) {
      MeshEvent ev;
      ev.tick = e["tick"].as<std::int64_t>(0);
      if (ev.tick < 0) fail(source, e, "event tick must not be negative");
      if (e["discover"] || e["send"]) {
        ev.kind = e["discover"] ? MeshEvent::Kind::kDiscover : MeshEvent::Kind::kSend;
        std::tie(ev.source, ev.destination) = pair_of(source, e["discover"] ? e["discover"] : e["send"], "endpoints");
        known(ev.source, e);
        known(ev.destination, e);
        ev.payload = e["payload"].as<std::string>("");
      } else if (e["move"]) {
        ev.kind = MeshEvent::Kind::kMove;
        ev.source = e["move"].as<NodeId>();
        known(ev.source, e);
        ev.position = point(source, e["position"], "move position");
      } else {
        fail(source, e, "event needs one of 'discover', 'send', 'move'");
      }
      s.events.push_back(ev);
    }
    s.ticks = root["ticks"].as<int>(s.ticks);
  } catch (const YAML::Exception& e) {
    throw std::runtime_error(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (s.link.latency < 1) fail(source, root["link"], "link latency must be at least one tick");
  if (s.link.loss_probability < 0 || s.link.loss_probability > 1) fail(source, root["link"], "link loss must lie in [0, 1]");
  if (s.ticks < 1) fail(source, root["ticks"], "ticks must be positive");
  std::stable_sort(s.events.begin(), s.events.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
  return s;
}

MeshScript load_mesh_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_mesh_script(text.str(), path.string());
}

MeshReport run_mesh_script(const MeshScript& script) {
  Mesh mesh(script.link, script.aodv);
  for (const auto& [id, p] : script.nodes) mesh.add_node(id, p);

  struct Watch {
    std::int64_t tick;
    NodeId source, dest;
    Json result;
  };
  std::vector<Watch> discoveries;
  std::vector<std::pair<std::uint64_t, std::int64_t>> sends;

  auto settle = [&] {
    for (auto& w : discoveries) {
      if (!w.result.is_null()) continue;
      const auto status = mesh.discovery_status(w.source, w.dest);
      if (status == DiscoveryStatus::kPending) continue;
      Json r{{"tick", w.tick}, {"source", w.source}, {"destination", w.dest}, {"status", status_name(status)},
             {"resolved_tick", mesh.tick()}};
      const auto route = mesh.route(w.source, w.dest);
      if (status == DiscoveryStatus::kFound && route) {
        r["hops"] = route->hop_count;
        r["path"] = path_of(mesh, w.source, w.dest);
      }
      w.result = r;
    }
  };

  std::size_t next = 0;
  for (int t = 0; t < script.ticks; ++t) {
    for (; next < script.events.size() && script.events[next].tick <= mesh.tick(); ++next) {
      const auto& e = script.events[next];
      switch (e.kind) {
        case MeshEvent::Kind::kDiscover:
          mesh.start_discovery(e.source, e.destination);
          discoveries.push_back({mesh.tick(), e.source, e.destination, Json()});
          break;
        case MeshEvent::Kind::kSend:
          sends.emplace_back(mesh.send_data(e.source, e.destination, e.payload), mesh.tick());
          break;
        case MeshEvent::Kind::kMove:
          mesh.set_position(e.source, e.position);
          break;
      }
    }
    settle();
    mesh.advance();
    settle();
  }

  Json disc = Json::array();
  for (const auto& w : discoveries)
    disc.push_back(w.result.is_null()
                       ? Json{{"tick", w.tick}, {"source", w.source}, {"destination", w.dest}, {"status", "pending"}}
                       : w.result);
  Json data = Json::array();
  for (const auto& [id, tick] : sends) {
    const auto& o = mesh.outcome(id);
    Json d{{"tick", tick}, {"source", o.source}, {"destination", o.destination}, {"status", status_name(o.status)}};
    if (o.status == DataStatus::kDelivered) {
      d["hops"] = o.hops;
      d["delivered_tick"] = o.delivered_tick;
    }
    data.push_back(d);
  }
  Json rerr = Json::object();
  for (NodeId id : mesh.nodes()) rerr[std::to_string(id)] = mesh.rerr_received(id);

  MeshReport report;
  report.json = {{"ticks", mesh.tick()}, {"discoveries", disc}, {"data", data}, {"rerr_received", rerr},
                 {"packets", mesh.trace().size()}};
  report.trace = mesh.trace();
  return report;
}

}  // namespace una
