#include "una/network.hpp"

namespace una {

std::optional<std::uint64_t> ControlNetwork::send(const std::string& from, const std::string& to, MessageKind kind,
                                                  Json payload, std::int64_t now) {
  return post(from, to, kind, std::move(payload), now, true);
}

std::optional<std::uint64_t> ControlNetwork::record(const std::string& from, const std::string& to, MessageKind kind,
                                                    Json payload, std::int64_t now) {
  return post(from, to, kind, std::move(payload), now, false);
}

std::optional<std::uint64_t> ControlNetwork::post(const std::string& from, const std::string& to, MessageKind kind,
                                                  Json payload, std::int64_t now, bool queue) {
  if (!attached(from) || !attached(to) || from == to) return std::nullopt;
  if ((from == kCentral) == (to == kCentral)) return std::nullopt;  // spokes only
  if (!central_up_) return std::nullopt;
  Envelope e;
  e.sent_tick = now;
  e.deliver_tick = now + latency_;
  e.from = from;
  e.to = to;
  e.message = {++last_id_[from], kind, from, std::move(payload)};
  log_.push_back(e);
  if (queue) inbox_[to].push_back(std::move(e));
  return log_.back().message.id;
}

std::vector<Envelope> ControlNetwork::receive(const std::string& endpoint, std::int64_t now) {
  std::vector<Envelope> out;
  auto it = inbox_.find(endpoint);
  if (it == inbox_.end()) return out;
  auto& queue = it->second;
  std::size_t n = 0;
  // A fixed latency keeps the inbox in delivery order.
  while (n < queue.size() && queue[n].deliver_tick <= now) ++n;
  out.assign(std::make_move_iterator(queue.begin()), std::make_move_iterator(queue.begin() + n));
  queue.erase(queue.begin(), queue.begin() + n);
  return out;
}

SeparationAudit audit_separation(const ControlNetwork& control, const std::vector<std::string>& mesh_payloads,
                                 std::size_t mesh_packets) {
  SeparationAudit audit;
  audit.control_messages = control.log().size();
  audit.mesh_packets = mesh_packets;
  std::map<std::string, std::uint64_t> last;
  for (const auto& e : control.log()) {
    if ((e.from == kCentral) == (e.to == kCentral))
      audit.violations.push_back("control message " + e.from + "->" + e.to + " is off the star");
    try {
      const auto back = decode(encode(e.message));
      if (back.id <= last[e.from]) audit.violations.push_back("non-increasing id from " + e.from);
      last[e.from] = back.id;
    } catch (const WireError& err) {
      audit.violations.push_back(std::string("malformed control message: ") + err.what());
    }
  }
  for (const auto& p : mesh_payloads) {
    try {
      decode(p);
      audit.violations.push_back("wire message found on the mesh");
    } catch (const WireError&) {
    }
  }
  return audit;
}

}  // namespace una
