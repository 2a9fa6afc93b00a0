#ifndef UNA_SRC_NET_UTIL_HPP
#define UNA_SRC_NET_UTIL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace una::net {

/// Writes everything or returns false.
bool send_all(int fd, std::string_view data);

/// Buffered reads over a socket. A negative timeout blocks.
class Reader {
 public:
  explicit Reader(int fd) : fd_(fd) {}

  /// Line without its terminator ("\n" or "\r\n"); nothing on EOF, error or
  /// timeout (timed_out() tells which).
  std::optional<std::string> line(double timeout_s = -1, std::size_t max_length = 1 << 24);
  std::optional<std::string> bytes(std::size_t n, double timeout_s = -1);
  bool timed_out() const { return timed_out_; }

 private:
  bool fill(double timeout_s);

  int fd_;
  std::string buffer_;
  bool timed_out_ = false;
};

std::string base64(std::string_view bytes);

/// Sec-WebSocket-Accept value for a client key.
std::string websocket_accept(std::string_view key);

enum class WsOpcode : std::uint8_t { kContinuation = 0, kText = 1, kBinary = 2, kClose = 8, kPing = 9, kPong = 10 };

/// Unmasked server frame.
std::string websocket_frame(WsOpcode op, std::string_view payload);

struct WsFrame {
  bool fin = true;
  WsOpcode op = WsOpcode::kText;
  std::string payload;
};

std::optional<WsFrame> read_websocket_frame(Reader& in, std::size_t max_payload = 1 << 24);

/// Listening socket on host:port (port 0 picks one). Returns fd and bound port.
std::pair<int, int> listen_on(const std::string& host, int port);

/// Connected socket, or throws std::system_error.
int connect_to(const std::string& host, int port);

void close_fd(int fd);
void shutdown_fd(int fd);

}  // namespace una::net

#endif  // UNA_SRC_NET_UTIL_HPP
