#ifndef UNA_WIRE_HPP
#define UNA_WIRE_HPP

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "una/arena.hpp"
#include "una/coverage.hpp"
#include "una/vision.hpp"

namespace una {

using Json = nlohmann::json;

inline constexpr std::string_view kProtocolVersion = "una/1";

enum class MessageKind {
  kStateUpdate,
  kSetObjectives,
  kManualCmd,
  kTakeoff,
  kLand,
  kEmergencyStop,
  kFrameRequest,
  kAck,
  kFault,
};

const char* to_string(MessageKind kind);
MessageKind message_kind_from_string(std::string_view s);

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One protocol message: {"id", "kind", "sender", "payload"} on a single line.
struct WireMessage {
  std::uint64_t id = 0;
  MessageKind kind = MessageKind::kAck;
  std::string sender;
  Json payload = Json::object();
};

/// Compact single-line JSON without the trailing newline.
std::string encode(const WireMessage& message);

/// Parses and validates one line. Throws WireError naming the problem.
WireMessage decode(std::string_view line);

/// Checks the payload fields a kind requires. Throws WireError.
void validate_payload(MessageKind kind, const Json& payload);

/// Strictly increasing message ids, safe to share between threads.
class IdSequence {
 public:
  std::uint64_t next() { return ++last_; }
  std::uint64_t last() const { return last_; }

 private:
  std::atomic<std::uint64_t> last_{0};
};

WireMessage make_ack(std::uint64_t id, std::string sender, std::uint64_t ref, Json extra = Json::object());
WireMessage make_fault(std::uint64_t id, std::string sender, std::string reason,
                       std::optional<std::uint64_t> ref = std::nullopt);

Json to_json(const Vector2& p);
Vector2 point_from_json(const Json& j);
Json to_json(const Pose2D& p);
Pose2D pose_from_json(const Json& j);
Json to_json(const AtCommand& c);
AtCommand command_from_json(const Json& j);
Json to_json(const CoverageInstance& inst);
CoverageInstance instance_from_json(const Json& j);
Json to_json(const Directive& d);
Directive directive_from_json(const Json& j);
Json to_json(const LocalView& v);
LocalView view_from_json(const Json& j);

/// {"detections": [{"tag", "kind", "u", "v", "x", "y", "area"}], "missing": [...]}
Json to_json(const TagScan& scan);

/// SET_OBJECTIVES payload: {"objectives": [{"drone", "x", "y", "yaw"}]}.
Json objectives_payload(const std::map<std::string, Pose2D>& assignments);
std::map<std::string, Pose2D> objectives_from_payload(const Json& payload);

}  // namespace una

#endif  // UNA_WIRE_HPP
