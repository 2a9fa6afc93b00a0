#ifndef UNA_NETWORK_HPP
#define UNA_NETWORK_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "una/mesh.hpp"
#include "una/wire.hpp"

namespace una {

inline constexpr const char* kCentral = "central";

struct Envelope {
  std::int64_t sent_tick = 0;
  std::int64_t deliver_tick = 0;
  std::string from;
  std::string to;
  WireMessage message;
};

/// Infrastructure link between the central node and each drone: reliable,
/// ordered, optionally delayed by a fixed number of ticks. Every message is
/// kept in an audit log.
class ControlNetwork {
 public:
  explicit ControlNetwork(int latency_ticks = 0) : latency_(latency_ticks) {}

  void attach(const std::string& drone) { drones_.insert(drone); }
  bool attached(const std::string& endpoint) const {
    return endpoint == kCentral || drones_.count(endpoint) > 0;
  }

  /// Marks the central node down or up; nothing reaches or leaves it while down.
  void set_central_up(bool up) { central_up_ = up; }
  bool central_up() const { return central_up_; }

  /// Sends along a spoke of the star. Returns the message id, or nothing when
  /// an endpoint is unknown or the central node is down.
  std::optional<std::uint64_t> send(const std::string& from, const std::string& to, MessageKind kind,
                                    Json payload, std::int64_t now);

  /// Logs a message whose payload the caller hands over synchronously, as in
  /// a request answered within the same tick. Same reachability as send().
  std::optional<std::uint64_t> record(const std::string& from, const std::string& to, MessageKind kind,
                                      Json payload, std::int64_t now);

  /// Messages for `endpoint` due at or before `now`, in send order.
  std::vector<Envelope> receive(const std::string& endpoint, std::int64_t now);

  /// True when some queued, undelivered message satisfies `pred`.
  template <class Pred>
  bool any_queued(Pred pred) const {
    for (const auto& [to, queue] : inbox_)
      for (const auto& e : queue)
        if (pred(e)) return true;
    return false;
  }

  const std::vector<Envelope>& log() const { return log_; }
  int latency() const { return latency_; }

 private:
  std::optional<std::uint64_t> post(const std::string& from, const std::string& to, MessageKind kind, Json payload,
                                    std::int64_t now, bool queue);

  int latency_;
  bool central_up_ = true;
  std::set<std::string> drones_;
  std::map<std::string, std::uint64_t> last_id_;
  std::map<std::string, std::vector<Envelope>> inbox_;
  std::vector<Envelope> log_;
};

struct SeparationAudit {
  std::size_t control_messages = 0;
  std::size_t mesh_packets = 0;
  std::vector<std::string> violations;

  bool clean() const { return violations.empty(); }
};

/// Checks the two networks never carry each other's traffic: every control
/// message is a well-formed wire message on a spoke of the star, and no mesh
/// payload parses as a wire message.
SeparationAudit audit_separation(const ControlNetwork& control, const std::vector<std::string>& mesh_payloads,
                                 std::size_t mesh_packets);

}  // namespace una

#endif  // UNA_NETWORK_HPP
