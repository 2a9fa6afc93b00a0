#ifndef UNA_SERVICE_HPP
#define UNA_SERVICE_HPP

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "una/testbed.hpp"

namespace una {

/// Port used when neither a flag nor UNA_PORT says otherwise.
inline constexpr int kDefaultPort = 7447;

/// UNA_PORT when set to a valid port, else kDefaultPort.
int default_port();

/// Steps in step with the wall clock (`speed` simulated seconds per second)
/// until the testbed finishes or `stop` is set.
void run_paced(Testbed& testbed, const std::atomic<bool>& stop, double speed = 1.0);

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::filesystem::path static_dir;  // files served over plain HTTP when set
  std::size_t max_outbox = 256;      // oldest stream messages are dropped beyond this
  double reply_timeout = 2.0;        // seconds to wait for the stepping context
};

/// TCP front end of the central node. Each connection opens with a version
/// line ("una/1", optionally followed by the role "optimizer") which the
/// service echoes, then carries one JSON message per line in both directions.
/// The same protocol is available to browsers as WebSocket text frames on /ws.
///
/// start() registers the service as the testbed's optimizer plugin and stop()
/// removes it; the most recent "optimizer" connection answers plan requests.
class Service : public OptimizerPlugin {
 public:
  Service(Testbed& testbed, ServiceConfig config = {});
  ~Service() override;

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts accepting. Throws std::system_error.
  void start();
  void stop();
  int port() const { return port_; }
  std::size_t connections() const;

  std::optional<std::map<std::string, Pose2D>> request(const Json& state_update, double deadline_s) override;

 private:
  struct Connection;

  void accept_loop();
  void serve(const std::shared_ptr<Connection>& conn);
  bool serve_http(const std::shared_ptr<Connection>& conn, const std::string& target);
  using NextMessage = std::function<std::optional<std::string>()>;
  void session(const std::shared_ptr<Connection>& conn, const std::string& hello, const NextMessage& next);
  void handle(const std::shared_ptr<Connection>& conn, const std::string& line);
  void enqueue(Connection& conn, MessageKind kind, Json payload, bool stream = false);
  void reap(bool all);

  Testbed& testbed_;
  ServiceConfig config_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;

  mutable std::mutex conn_mutex_;
  std::list<std::shared_ptr<Connection>> conns_;

  std::mutex plugin_mutex_;
  std::condition_variable plugin_cv_;
  std::weak_ptr<Connection> plugin_;
  std::uint64_t request_seq_ = 0;
  std::uint64_t waiting_for_ = 0;
  std::optional<std::map<std::string, Pose2D>> plugin_reply_;
};

}  // namespace una

#endif  // UNA_SERVICE_HPP
