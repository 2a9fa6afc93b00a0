#include "net_util.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <system_error>
#include <vector>

#include <openssl/evp.h>
#include <openssl/sha.h>

namespace una::net {

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(std::size_t(n));
  }
  return true;
}

bool Reader::fill(double timeout_s) {
  timed_out_ = false;
  if (timeout_s >= 0) {
    pollfd p{fd_, POLLIN, 0};
    int r;
    do {
      r = ::poll(&p, 1, int(timeout_s * 1000));
    } while (r < 0 && errno == EINTR);
    if (r == 0) {
      timed_out_ = true;
      return false;
    }
    if (r < 0) return false;
  }
  char chunk[4096];
  ssize_t n;
  do {
    n = ::recv(fd_, chunk, sizeof chunk, 0);
  } while (n < 0 && errno == EINTR);
  if (n <= 0) return false;
  buffer_.append(chunk, std::size_t(n));
  return true;
}

std::optional<std::string> Reader::line(double timeout_s, std::size_t max_length) {
  while (true) {
    const auto pos = buffer_.find('\n');
    if (pos != std::string::npos) {
      std::string out = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!out.empty() && out.back() == '\r') out.pop_back();
      return out;
    }
    if (buffer_.size() > max_length || !fill(timeout_s)) return std::nullopt;
  }
}

std::optional<std::string> Reader::bytes(std::size_t n, double timeout_s) {
  while (buffer_.size() < n)
    if (!fill(timeout_s)) return std::nullopt;
  std::string out = buffer_.substr(0, n);
  buffer_.erase(0, n);
  return out;
}

std::string base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), int(bytes.size()));
  out.resize(std::size_t(n));
  return out;
}

std::string websocket_accept(std::string_view key) {
  const std::string text = std::string(key) + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(text.data()), text.size(), digest);
  return base64(std::string_view(reinterpret_cast<const char*>(digest), sizeof digest));
}

std::string websocket_frame(WsOpcode op, std::string_view payload) {
  std::string out;
  out.push_back(char(0x80 | std::uint8_t(op)));
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(char(n));
  } else if (n <= 0xFFFF) {
    out.push_back(char(126));
    out.push_back(char((n >> 8) & 0xFF));
    out.push_back(char(n & 0xFF));
  } else {
    out.push_back(char(127));
    for (int i = 7; i >= 0; --i) out.push_back(char((std::uint64_t(n) >> (8 * i)) & 0xFF));
  }
  out.append(payload);
  return out;
}

std::optional<WsFrame> read_websocket_frame(Reader& in, std::size_t max_payload) {
  auto head = in.bytes(2);
  if (!head) return std::nullopt;
  const auto b0 = std::uint8_t((*head)[0]), b1 = std::uint8_t((*head)[1]);
  WsFrame f;
  f.fin = (b0 & 0x80) != 0;
  f.op = WsOpcode(b0 & 0x0F);
  const bool masked = (b1 & 0x80) != 0;
  std::uint64_t len = b1 & 0x7F;
  if (len >= 126) {
    auto ext = in.bytes(len == 126 ? 2 : 8);
    if (!ext) return std::nullopt;
    len = 0;
    for (char c : *ext) len = (len << 8) | std::uint8_t(c);
  }
  if (len > max_payload) return std::nullopt;
  std::string mask(4, '\0');
  if (masked) {
    auto m = in.bytes(4);
    if (!m) return std::nullopt;
    mask = *m;
  }
  auto payload = in.bytes(std::size_t(len));
  if (!payload) return std::nullopt;
  if (masked)
    for (std::size_t i = 0; i < payload->size(); ++i) (*payload)[i] ^= mask[i % 4];
  f.payload = std::move(*payload);
  return f;
}

std::pair<int, int> listen_on(const std::string& host, int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::system_error(errno, std::generic_category(), "socket");
  const int yes = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(std::uint16_t(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::system_error(EINVAL, std::generic_category(), "bad listen address " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd, 16) < 0) {
    const int err = errno;
    ::close(fd);
    throw std::system_error(err, std::generic_category(), "bind " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return {fd, ntohs(addr.sin_port)};
}

int connect_to(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0)
    throw std::system_error(EHOSTUNREACH, std::generic_category(), std::string("resolve ") + host + ": " + gai_strerror(rc));
  int fd = -1;
  for (auto* p = res; p; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw std::system_error(ECONNREFUSED, std::generic_category(), "connect " + host + ":" + std::to_string(port));
  const int yes = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof yes);
  return fd;
}

void close_fd(int fd) {
  if (fd >= 0) ::close(fd);
}

void shutdown_fd(int fd) {
  if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
}

}  // namespace una::net
