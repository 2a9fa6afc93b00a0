#ifndef UNA_MESH_HPP
#define UNA_MESH_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "una/geometry.hpp"

namespace una {

using NodeId = int;

/// Unit-disk links: two nodes hear each other iff their distance <= range.
/// Every reception is dropped independently with loss_probability.
struct LinkModel {
  double range = 1.0;
  double loss_probability = 0.0;
  int latency = 1;  // ticks, >= 1
  std::uint64_t seed = 1;
};

/// Protocol timers are in mesh ticks.
struct AodvConfig {
  int active_route_timeout = 150;
  int discovery_timeout = 20;
  int rreq_retries = 2;  // timeout doubles on each retry
  int seen_rreq_ticks = 200;
  bool intermediate_replies = true;
  bool hello_enabled = false;
  int hello_interval = 50;
  int allowed_hello_loss = 2;
};

enum class PacketKind { kRreq, kRrep, kRerr, kData };

const char* to_string(PacketKind kind);

struct AodvPacket {
  PacketKind kind = PacketKind::kData;
  NodeId originator = -1;
  NodeId destination = -1;
  std::uint32_t broadcast_id = 0;
  int hop_count = 0;
  std::uint32_t originator_seq = 0;
  std::uint32_t destination_seq = 0;
  bool destination_seq_known = false;
  bool hello = false;  // an RREP advertising the sender to its neighbors
  std::vector<std::pair<NodeId, std::uint32_t>> unreachable;  // RERR
  std::uint64_t data_id = 0;
  std::string payload;
};

struct RouteEntry {
  NodeId destination = -1;
  NodeId next_hop = -1;
  int hop_count = 0;
  std::uint32_t dest_sequence = 0;
  bool sequence_known = false;
  int lifetime = 0;
  bool valid = false;
  std::set<NodeId> precursors;
};

struct Delivery {
  NodeId node;
  NodeId from;
  AodvPacket packet;
};

struct PacketTraceRow {
  std::int64_t tick = 0;
  PacketKind kind = PacketKind::kData;
  NodeId src = -1;
  NodeId dst = -1;
  int hops = 0;
  bool dropped = false;
  bool broadcast = false;
};

void write_packet_trace_csv(std::ostream& out, const std::vector<PacketTraceRow>& rows);

enum class DiscoveryStatus { kNone, kPending, kFound, kFailed };
enum class DataStatus { kPending, kDelivered, kFailed };

struct DataOutcome {
  DataStatus status = DataStatus::kPending;
  NodeId source = -1;
  NodeId destination = -1;
  std::int64_t sent_tick = 0;
  std::int64_t delivered_tick = -1;
  int hops = 0;
};

/// Simulated ad-hoc coordination network running a subset of AODV:
/// RREQ/RREP/RERR with sequence numbers, broadcast-id duplicate suppression,
/// route lifetimes and optional hellos.
class Mesh {
 public:
  using DataHandler = std::function<void(NodeId at, const AodvPacket&)>;

  explicit Mesh(LinkModel link, AodvConfig config = {});

  void add_node(NodeId id, const Vector2& position);
  void set_position(NodeId id, const Vector2& position);
  Vector2 position(NodeId id) const;
  std::vector<NodeId> nodes() const;
  bool in_range(NodeId a, NodeId b) const;

  std::int64_t tick() const { return tick_; }

  /// Queues a link-layer transmission; `to` empty means broadcast.
  void transmit(NodeId from, std::optional<NodeId> to, AodvPacket packet);

  /// Link layer for the current tick: hands over every in-flight packet whose
  /// latency has elapsed, applying range and loss. Unicasts to an
  /// out-of-range receiver are reported back to the sender as link breaks.
  std::vector<Delivery> deliver();

  /// deliver(), protocol handling, route maintenance, then the clock moves on.
  void advance();
  void run(int ticks);

  /// Floods an RREQ from `source` for `dest`.
  void start_discovery(NodeId source, NodeId dest);
  DiscoveryStatus discovery_status(NodeId source, NodeId dest) const;
  /// Runs the mesh until the discovery resolves or `max_ticks` elapse.
  std::optional<RouteEntry> discover(NodeId source, NodeId dest, int max_ticks = 1000);

  /// Sends a payload, discovering a route on demand. Returns an id for outcome().
  std::uint64_t send_data(NodeId source, NodeId dest, std::string payload);
  const DataOutcome& outcome(std::uint64_t id) const { return outcomes_.at(id); }

  /// Live (valid, unexpired) route or nothing.
  std::optional<RouteEntry> route(NodeId at, NodeId dest) const;
  const std::map<NodeId, RouteEntry>& routing_table(NodeId at) const;
  std::uint32_t sequence_number(NodeId id) const;
  /// Number of RERR packets a node has received.
  int rerr_received(NodeId id) const;

  void set_data_handler(DataHandler handler) { data_handler_ = std::move(handler); }

  const std::vector<PacketTraceRow>& trace() const { return trace_; }
  const LinkModel& link() const { return link_; }
  LinkModel& link() { return link_; }
  const AodvConfig& config() const { return config_; }

 private:
  struct Discovery {
    int retries_left = 0;
    int timeout = 0;
    std::int64_t deadline = 0;
  };

  struct Node {
    NodeId id = -1;
    Vector2 position = Vector2::Zero();
    std::uint32_t sequence = 0;
    std::uint32_t next_broadcast_id = 0;
    std::map<NodeId, RouteEntry> routes;
    std::map<std::pair<NodeId, std::uint32_t>, std::int64_t> seen_rreq;  // -> expiry tick
    std::map<NodeId, Discovery> discoveries;
    std::map<NodeId, DiscoveryStatus> discovery_results;
    std::map<NodeId, std::deque<AodvPacket>> buffered;
    std::map<NodeId, std::int64_t> neighbor_heard;
    int rerr_received = 0;
  };

  struct InFlight {
    std::int64_t deliver_tick;
    NodeId from;
    std::optional<NodeId> to;
    AodvPacket packet;
  };

  Node& node(NodeId id);
  const Node& node(NodeId id) const;

  void handle(const Delivery& d);
  void handle_rreq(Node& n, NodeId from, const AodvPacket& p);
  void handle_rrep(Node& n, NodeId from, const AodvPacket& p);
  void handle_rerr(Node& n, NodeId from, const AodvPacket& p);
  void forward_data(Node& n, AodvPacket p);
  void link_break(NodeId at, NodeId lost_neighbor, const std::optional<AodvPacket>& packet);
  void send_rreq(Node& n, NodeId dest);
  void maintenance(Node& n);
  void fail_buffered(Node& n, NodeId dest);

  /// Installs or refreshes a route per AODV freshness rules.
  RouteEntry* update_route(Node& n, NodeId dest, NodeId next_hop, int hops, std::uint32_t seq,
                           bool seq_known);
  void touch_neighbor(Node& n, NodeId neighbor);
  RouteEntry* live_route(Node& n, NodeId dest);

  LinkModel link_;
  AodvConfig config_;
  std::map<NodeId, Node> nodes_;
  std::deque<InFlight> in_flight_;
  std::vector<std::pair<NodeId, std::pair<NodeId, AodvPacket>>> pending_breaks_;
  std::mt19937_64 rng_;
  std::int64_t tick_ = 0;
  std::uint64_t next_data_id_ = 1;
  std::map<std::uint64_t, DataOutcome> outcomes_;
  std::vector<PacketTraceRow> trace_;
  DataHandler data_handler_;
};

}  // namespace una

#endif  // UNA_MESH_HPP
