#ifndef UNA_MESH_SCRIPT_HPP
#define UNA_MESH_SCRIPT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "una/mesh.hpp"

namespace una {

/// Timed action in a mesh script. `discover` and `send` use `source` and
/// `destination`; `move` relocates `source`.
struct MeshEvent {
  enum class Kind { kDiscover, kSend, kMove };
  std::int64_t tick = 0;
  Kind kind = Kind::kDiscover;
  NodeId source = -1;
  NodeId destination = -1;
  Vector2 position = Vector2::Zero();
  std::string payload;
};

/// A standalone mesh experiment:
///
///   link: {range: 1.0, loss: 0.0, latency: 1, seed: 1}
///   aodv: {active_route_timeout: 150, hello: false}
///   nodes: [{id: 0, position: [0, 0]}, ...]
///   events: [{tick: 0, discover: [0, 2]}, {tick: 50, send: [0, 2], payload: hi},
///            {tick: 80, move: 1, position: [0.8, 3.0]}]
///   ticks: 300
struct MeshScript {
  LinkModel link;
  AodvConfig aodv;
  std::vector<std::pair<NodeId, Vector2>> nodes;
  std::vector<MeshEvent> events;
  int ticks = 200;
};

/// Throws std::runtime_error as "source:line: message".
MeshScript parse_mesh_script(const std::string& yaml, const std::string& source = "mesh");
MeshScript load_mesh_script(const std::filesystem::path& path);

struct MeshReport {
  nlohmann::json json;  // discoveries (with hop count and path), data outcomes, RERR counts
  std::vector<PacketTraceRow> trace;
};

MeshReport run_mesh_script(const MeshScript& script);

}  // namespace una

#endif  // UNA_MESH_SCRIPT_HPP
