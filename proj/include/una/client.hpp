#ifndef UNA_CLIENT_HPP
#define UNA_CLIENT_HPP

#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "una/wire.hpp"

namespace una {

class ClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Line-protocol client for the central service, used by tools and plugins.
class Client {
 public:
  /// Connects and performs the version handshake. `role` is empty or
  /// "optimizer". Throws ClientError when the service refuses.
  static Client connect(const std::string& host, int port, const std::string& role = {},
                        std::string version = std::string(kProtocolVersion), double timeout_s = 5.0);

  Client(Client&&) noexcept;
  Client& operator=(Client&&) noexcept;
  ~Client();

  /// Sends one message and returns its id.
  std::uint64_t send(MessageKind kind, Json payload = Json::object());
  /// Sends a raw line as is.
  void send_line(const std::string& line);

  /// Next message from the service, or nothing on timeout.
  std::optional<WireMessage> receive(double timeout_s);
  /// ACK or FAULT referring to `id`; other messages stay queued for receive().
  std::optional<WireMessage> await_reply(std::uint64_t id, double timeout_s);

  bool connected() const;
  void close();

 private:
  struct Impl;
  explicit Client(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

using PlanFunction = std::function<std::map<std::string, Pose2D>(const CoverageInstance&)>;

/// The built-in greedy planner, as a plugin would run it.
std::map<std::string, Pose2D> greedy_plan(const CoverageInstance& instance);

/// Answers plan requests on an "optimizer" connection until `stop` is set or
/// the connection drops. Returns the number of requests answered.
int serve_plugin(Client& client, const PlanFunction& plan, const std::atomic<bool>& stop);

}  // namespace una

#endif  // UNA_CLIENT_HPP
