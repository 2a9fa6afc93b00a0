#include "una/mesh.hpp"

#include <algorithm>
#include <stdexcept>

namespace una {

const char* to_string(PacketKind kind) {
  switch (kind) {
    case PacketKind::kRreq: return "RREQ";
    case PacketKind::kRrep: return "RREP";
    case PacketKind::kRerr: return "RERR";
    case PacketKind::kData: return "DATA";
  }
  return "?";
}

void write_packet_trace_csv(std::ostream& out, const std::vector<PacketTraceRow>& rows) {
  out << "tick,kind,src,dst,hops,dropped\n";
  for (const auto& r : rows) {
    out << r.tick << ',' << to_string(r.kind) << ',' << r.src << ',' << r.dst << ',' << r.hops << ','
        << (r.dropped ? 1 : 0) << '\n';
  }
}

Mesh::Mesh(LinkModel link, AodvConfig config) : link_(link), config_(config), rng_(link.seed) {
  if (link_.latency < 1) throw std::invalid_argument("link latency must be at least one tick");
  if (link_.loss_probability < 0 || link_.loss_probability > 1)
    throw std::invalid_argument("loss probability must lie in [0, 1]");
}

void Mesh::add_node(NodeId id, const Vector2& position) {
  if (nodes_.count(id)) throw std::invalid_argument("duplicate mesh node " + std::to_string(id));
  Node n;
  n.id = id;
  n.position = position;
  nodes_.emplace(id, std::move(n));
}

void Mesh::set_position(NodeId id, const Vector2& position) { node(id).position = position; }
Vector2 Mesh::position(NodeId id) const { return node(id).position; }

std::vector<NodeId> Mesh::nodes() const {
  std::vector<NodeId> out;
  for (const auto& [id, n] : nodes_) out.push_back(id);
  return out;
}

bool Mesh::in_range(NodeId a, NodeId b) const {
  return (node(a).position - node(b).position).norm() <= link_.range;
}

Mesh::Node& Mesh::node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("unknown mesh node " + std::to_string(id));
  return it->second;
}

const Mesh::Node& Mesh::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("unknown mesh node " + std::to_string(id));
  return it->second;
}

void Mesh::transmit(NodeId from, std::optional<NodeId> to, AodvPacket packet) {
  in_flight_.push_back({tick_ + link_.latency, from, to, std::move(packet)});
}

std::vector<Delivery> Mesh::deliver() {
  std::vector<Delivery> out;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto lost = [&] {
    if (link_.loss_probability <= 0) return false;
    if (link_.loss_probability >= 1) return true;
    return uniform(rng_) < link_.loss_probability;
  };

  std::deque<InFlight> later;
  while (!in_flight_.empty()) {
    InFlight f = std::move(in_flight_.front());
    in_flight_.pop_front();
    if (f.deliver_tick > tick_) {
      later.push_back(std::move(f));
      continue;
    }
    if (!nodes_.count(f.from)) continue;

    if (f.to) {
      PacketTraceRow row{tick_, f.packet.kind, f.from, *f.to, f.packet.hop_count, false, false};
      if (!nodes_.count(*f.to) || !in_range(f.from, *f.to)) {
        row.dropped = true;
        trace_.push_back(row);
        pending_breaks_.push_back({f.from, {*f.to, f.packet}});
        continue;
      }
      row.dropped = lost();
      trace_.push_back(row);
      if (!row.dropped) out.push_back({*f.to, f.from, std::move(f.packet)});
    } else {
      for (const auto& [id, n] : nodes_) {
        if (id == f.from || !in_range(f.from, id)) continue;
        PacketTraceRow row{tick_, f.packet.kind, f.from, id, f.packet.hop_count, lost(), true};
        trace_.push_back(row);
        if (!row.dropped) out.push_back({id, f.from, f.packet});
      }
    }
  }
  in_flight_ = std::move(later);
  return out;
}

void Mesh::advance() {
  for (const auto& d : deliver()) handle(d);
  auto breaks = std::move(pending_breaks_);
  pending_breaks_.clear();
  for (const auto& [at, lost] : breaks) link_break(at, lost.first, lost.second);
  for (auto& [id, n] : nodes_) maintenance(n);
  ++tick_;
}

void Mesh::run(int ticks) {
  for (int i = 0; i < ticks; ++i) advance();
}

RouteEntry* Mesh::live_route(Node& n, NodeId dest) {
  auto it = n.routes.find(dest);
  if (it == n.routes.end() || !it->second.valid || it->second.lifetime <= 0) return nullptr;
  return &it->second;
}

std::optional<RouteEntry> Mesh::route(NodeId at, NodeId dest) const {
  const auto& n = node(at);
  auto it = n.routes.find(dest);
  if (it == n.routes.end() || !it->second.valid || it->second.lifetime <= 0) return std::nullopt;
  return it->second;
}

const std::map<NodeId, RouteEntry>& Mesh::routing_table(NodeId at) const { return node(at).routes; }
std::uint32_t Mesh::sequence_number(NodeId id) const { return node(id).sequence; }
int Mesh::rerr_received(NodeId id) const { return node(id).rerr_received; }

RouteEntry* Mesh::update_route(Node& n, NodeId dest, NodeId next_hop, int hops, std::uint32_t seq,
                               bool seq_known) {
  auto [it, inserted] = n.routes.try_emplace(dest);
  RouteEntry& e = it->second;
  if (inserted) e.destination = dest;

  bool replace = inserted || !e.valid || !e.sequence_known;
  if (seq_known && e.sequence_known) {
    if (seq > e.dest_sequence) {
      replace = true;
    } else if (seq == e.dest_sequence && (hops < e.hop_count || !e.valid)) {
      replace = true;
    } else if (seq < e.dest_sequence) {
      replace = false;
    }
  } else if (!seq_known && e.valid && !inserted) {
    // A route learned without a sequence number only wins if it is shorter.
    replace = hops < e.hop_count || (hops == e.hop_count && next_hop == e.next_hop);
  }

  if (replace) {
    e.next_hop = next_hop;
    e.hop_count = hops;
    if (seq_known) {
      e.dest_sequence = seq;
      e.sequence_known = true;
    }
    e.valid = true;
    e.lifetime = std::max(e.lifetime, config_.active_route_timeout);
  } else if (e.valid && e.next_hop == next_hop) {
    e.lifetime = std::max(e.lifetime, config_.active_route_timeout);
  }
  return e.valid ? &e : nullptr;
}

void Mesh::touch_neighbor(Node& n, NodeId neighbor) {
  n.neighbor_heard[neighbor] = tick_;
  update_route(n, neighbor, neighbor, 1, 0, false);
}

void Mesh::handle(const Delivery& d) {
  Node& n = node(d.node);
  touch_neighbor(n, d.from);
  switch (d.packet.kind) {
    case PacketKind::kRreq: handle_rreq(n, d.from, d.packet); break;
    case PacketKind::kRrep: handle_rrep(n, d.from, d.packet); break;
    case PacketKind::kRerr: handle_rerr(n, d.from, d.packet); break;
    case PacketKind::kData: {
      AodvPacket p = d.packet;
      p.hop_count += 1;
      if (p.destination == n.id) {
        auto& o = outcomes_[p.data_id];
        o.status = DataStatus::kDelivered;
        o.delivered_tick = tick_;
        o.hops = p.hop_count;
        if (data_handler_) data_handler_(n.id, p);
      } else {
        forward_data(n, std::move(p));
      }
      break;
    }
  }
}

void Mesh::handle_rreq(Node& n, NodeId from, const AodvPacket& p) {
  const auto key = std::make_pair(p.originator, p.broadcast_id);
  if (n.seen_rreq.count(key) || p.originator == n.id) return;
  n.seen_rreq[key] = tick_ + config_.seen_rreq_ticks;

  const int hops = p.hop_count + 1;
  RouteEntry* reverse = update_route(n, p.originator, from, hops, p.originator_seq, true);

  if (p.destination == n.id) {
    if (p.destination_seq_known) n.sequence = std::max(n.sequence, p.destination_seq);
    AodvPacket rrep;
    rrep.kind = PacketKind::kRrep;
    rrep.originator = p.originator;
    rrep.destination = n.id;
    rrep.destination_seq = n.sequence;
    rrep.destination_seq_known = true;
    rrep.hop_count = 0;
    transmit(n.id, from, std::move(rrep));
    return;
  }

  if (config_.intermediate_replies) {
    RouteEntry* fwd = live_route(n, p.destination);
    if (fwd && fwd->sequence_known &&
        (!p.destination_seq_known || fwd->dest_sequence >= p.destination_seq)) {
      AodvPacket rrep;
      rrep.kind = PacketKind::kRrep;
      rrep.originator = p.originator;
      rrep.destination = p.destination;
      rrep.destination_seq = fwd->dest_sequence;
      rrep.destination_seq_known = true;
      rrep.hop_count = fwd->hop_count;
      fwd->precursors.insert(from);
      if (reverse) reverse->precursors.insert(fwd->next_hop);
      transmit(n.id, from, std::move(rrep));
      return;
    }
  }

  AodvPacket fwd = p;
  fwd.hop_count = hops;
  if (auto it = n.routes.find(p.destination); it != n.routes.end() && it->second.sequence_known) {
    if (!fwd.destination_seq_known || it->second.dest_sequence > fwd.destination_seq) {
      fwd.destination_seq = it->second.dest_sequence;
      fwd.destination_seq_known = true;
    }
  }
  transmit(n.id, std::nullopt, std::move(fwd));
}

void Mesh::handle_rrep(Node& n, NodeId from, const AodvPacket& p) {
  if (p.hello) {
    update_route(n, p.destination, from, 1, p.destination_seq, true);
    return;
  }
  const int hops = p.hop_count + 1;
  RouteEntry* fwd = update_route(n, p.destination, from, hops, p.destination_seq, true);

  if (n.id == p.originator) {
    if (fwd) {
      n.discoveries.erase(p.destination);
      n.discovery_results[p.destination] = DiscoveryStatus::kFound;
      auto buffered = std::move(n.buffered[p.destination]);
      n.buffered.erase(p.destination);
      for (auto& pkt : buffered) forward_data(n, std::move(pkt));
    }
    return;
  }

  RouteEntry* reverse = live_route(n, p.originator);
  if (!reverse) return;
  if (fwd) fwd->precursors.insert(reverse->next_hop);
  reverse->precursors.insert(from);
  reverse->lifetime = std::max(reverse->lifetime, config_.active_route_timeout);
  AodvPacket out = p;
  out.hop_count = hops;
  transmit(n.id, reverse->next_hop, std::move(out));
}

void Mesh::handle_rerr(Node& n, NodeId from, const AodvPacket& p) {
  ++n.rerr_received;
  std::vector<std::pair<NodeId, std::uint32_t>> lost;
  for (const auto& [dest, seq] : p.unreachable) {
    auto it = n.routes.find(dest);
    if (it == n.routes.end()) continue;
    RouteEntry& e = it->second;
    if (!e.valid || e.next_hop != from) continue;
    e.valid = false;
    e.dest_sequence = std::max(e.dest_sequence, seq);
    e.sequence_known = true;
    lost.emplace_back(dest, e.dest_sequence);
  }
  if (lost.empty()) return;
  AodvPacket rerr;
  rerr.kind = PacketKind::kRerr;
  rerr.originator = n.id;
  rerr.unreachable = std::move(lost);
  transmit(n.id, std::nullopt, std::move(rerr));
}

void Mesh::forward_data(Node& n, AodvPacket p) {
  if (RouteEntry* r = live_route(n, p.destination)) {
    r->lifetime = std::max(r->lifetime, config_.active_route_timeout);
    if (RouteEntry* back = live_route(n, p.originator))
      back->lifetime = std::max(back->lifetime, config_.active_route_timeout);
    transmit(n.id, r->next_hop, std::move(p));
    return;
  }
  if (n.id == p.originator) {
    const NodeId dest = p.destination;
    n.buffered[dest].push_back(std::move(p));
    if (!n.discoveries.count(dest)) send_rreq(n, dest);
    return;
  }
  // Intermediate node without a route: drop and tell upstream.
  outcomes_[p.data_id].status = DataStatus::kFailed;
  AodvPacket rerr;
  rerr.kind = PacketKind::kRerr;
  rerr.originator = n.id;
  std::uint32_t seq = 0;
  if (auto it = n.routes.find(p.destination); it != n.routes.end()) seq = it->second.dest_sequence + 1;
  rerr.unreachable = {{p.destination, seq}};
  transmit(n.id, std::nullopt, std::move(rerr));
}

void Mesh::link_break(NodeId at, NodeId lost_neighbor, const std::optional<AodvPacket>& packet) {
  Node& n = node(at);
  if (packet && packet->kind == PacketKind::kData) outcomes_[packet->data_id].status = DataStatus::kFailed;
  n.neighbor_heard.erase(lost_neighbor);

  std::vector<std::pair<NodeId, std::uint32_t>> lost;
  for (auto& [dest, e] : n.routes) {
    if (!e.valid || e.next_hop != lost_neighbor) continue;
    e.valid = false;
    if (e.sequence_known) ++e.dest_sequence;
    lost.emplace_back(dest, e.dest_sequence);
  }
  if (lost.empty()) return;
  AodvPacket rerr;
  rerr.kind = PacketKind::kRerr;
  rerr.originator = n.id;
  rerr.unreachable = std::move(lost);
  transmit(n.id, std::nullopt, std::move(rerr));
}

void Mesh::send_rreq(Node& n, NodeId dest) {
  auto [it, inserted] = n.discoveries.try_emplace(dest);
  Discovery& disc = it->second;
  if (inserted) {
    disc.retries_left = config_.rreq_retries;
    disc.timeout = config_.discovery_timeout;
  }
  disc.deadline = tick_ + disc.timeout;
  n.discovery_results[dest] = DiscoveryStatus::kPending;

  ++n.sequence;
  AodvPacket rreq;
  rreq.kind = PacketKind::kRreq;
  rreq.originator = n.id;
  rreq.destination = dest;
  rreq.broadcast_id = n.next_broadcast_id++;
  rreq.originator_seq = n.sequence;
  if (auto r = n.routes.find(dest); r != n.routes.end() && r->second.sequence_known) {
    rreq.destination_seq = r->second.dest_sequence;
    rreq.destination_seq_known = true;
  }
  n.seen_rreq[{n.id, rreq.broadcast_id}] = tick_ + config_.seen_rreq_ticks;
  transmit(n.id, std::nullopt, std::move(rreq));
}

void Mesh::fail_buffered(Node& n, NodeId dest) {
  auto it = n.buffered.find(dest);
  if (it == n.buffered.end()) return;
  for (const auto& p : it->second) outcomes_[p.data_id].status = DataStatus::kFailed;
  n.buffered.erase(it);
}

void Mesh::maintenance(Node& n) {
  for (auto& [dest, e] : n.routes) {
    if (!e.valid) continue;
    if (--e.lifetime <= 0) {
      e.lifetime = 0;
      e.valid = false;
    }
  }
  std::erase_if(n.seen_rreq, [&](const auto& kv) { return kv.second <= tick_; });

  for (auto it = n.discoveries.begin(); it != n.discoveries.end();) {
    const NodeId dest = it->first;
    Discovery& disc = it->second;
    if (live_route(n, dest)) {
      n.discovery_results[dest] = DiscoveryStatus::kFound;
      it = n.discoveries.erase(it);
      continue;
    }
    if (tick_ < disc.deadline) {
      ++it;
      continue;
    }
    if (disc.retries_left > 0) {
      --disc.retries_left;
      disc.timeout *= 2;
      send_rreq(n, dest);
      ++it;
    } else {
      n.discovery_results[dest] = DiscoveryStatus::kFailed;
      fail_buffered(n, dest);
      it = n.discoveries.erase(it);
    }
  }

  if (config_.hello_enabled) {
    if (tick_ % config_.hello_interval == 0) {
      AodvPacket hello;
      hello.kind = PacketKind::kRrep;
      hello.hello = true;
      hello.originator = n.id;
      hello.destination = n.id;
      hello.destination_seq = n.sequence;
      hello.destination_seq_known = true;
      transmit(n.id, std::nullopt, std::move(hello));
    }
    const std::int64_t limit = std::int64_t{config_.allowed_hello_loss} * config_.hello_interval;
    std::vector<NodeId> silent;
    for (const auto& [nb, heard] : n.neighbor_heard)
      if (tick_ - heard > limit) silent.push_back(nb);
    for (NodeId nb : silent) link_break(n.id, nb, std::nullopt);
  }
}

void Mesh::start_discovery(NodeId source, NodeId dest) {
  Node& n = node(source);
  node(dest);
  if (n.discoveries.count(dest)) return;
  send_rreq(n, dest);
}

DiscoveryStatus Mesh::discovery_status(NodeId source, NodeId dest) const {
  const auto& results = node(source).discovery_results;
  auto it = results.find(dest);
  return it == results.end() ? DiscoveryStatus::kNone : it->second;
}

std::optional<RouteEntry> Mesh::discover(NodeId source, NodeId dest, int max_ticks) {
  if (auto r = route(source, dest)) return r;
  start_discovery(source, dest);
  for (int i = 0; i < max_ticks && discovery_status(source, dest) == DiscoveryStatus::kPending; ++i) advance();
  return route(source, dest);
}

std::uint64_t Mesh::send_data(NodeId source, NodeId dest, std::string payload) {
  const std::uint64_t id = next_data_id_++;
  DataOutcome& o = outcomes_[id];
  o.source = source;
  o.destination = dest;
  o.sent_tick = tick_;

  AodvPacket p;
  p.kind = PacketKind::kData;
  p.originator = source;
  p.destination = dest;
  p.data_id = id;
  p.payload = std::move(payload);
  node(dest);
  if (source == dest) {
    o.status = DataStatus::kDelivered;
    o.delivered_tick = tick_;
    if (data_handler_) data_handler_(dest, p);
    return id;
  }
  forward_data(node(source), std::move(p));
  return id;
}

}  // namespace una
