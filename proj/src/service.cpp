#include "una/service.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <sstream>

#include "net_util.hpp"
#include "una/arena.hpp"
#include "una/frame.hpp"

namespace una {

namespace {

constexpr double kHelloTimeout = 10.0;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::string content_type(const std::filesystem::path& p) {
  const auto ext = lower(p.extension().string());
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

std::string http_response(int status, const std::string& reason, const std::string& type, const std::string& body) {
  std::ostringstream out;
  out << "HTTP/1.1 " << status << ' ' << reason << "\r\n"
      << "Content-Type: " << type << "\r\n"
      << "Content-Length: " << body.size() << "\r\n"
      << "Connection: close\r\n\r\n"
      << body;
  return out.str();
}

constexpr const char* kIndexPage =
    "<!doctype html><title>una central</title>"
    "<p>Connect a WebSocket to <code>/ws</code> and send <code>una/1</code> as the first text message.</p>";

}  // namespace

int default_port() {
  if (const char* env = std::getenv("UNA_PORT")) {
    int port = 0;
    const std::string_view s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), port);
    if (ec == std::errc() && ptr == s.data() + s.size() && port > 0 && port < 65536) return port;
  }
  return kDefaultPort;
}

void run_paced(Testbed& testbed, const std::atomic<bool>& stop, double speed) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const double t0 = testbed.time();
  while (!stop && !testbed.finished()) {
    testbed.step();
    const auto due = start + std::chrono::duration_cast<Clock::duration>(
                                 std::chrono::duration<double>((testbed.time() - t0) / speed));
    std::this_thread::sleep_until(due);
  }
}

struct Service::Connection {
  int fd = -1;
  bool websocket = false;
  bool optimizer = false;
  std::thread reader;
  std::thread writer;
  std::atomic<bool> done{false};

  std::mutex m;
  std::condition_variable cv;
  struct Item {
    std::string data;
    bool stream;
  };
  std::deque<Item> outbox;
  std::uint64_t last_id = 0;
  bool closing = false;

  std::string frame(std::string_view text) const {
    return websocket ? net::websocket_frame(net::WsOpcode::kText, text) : std::string(text) + "\n";
  }

  void push_raw(std::string data) {
    {
      std::lock_guard lock(m);
      if (closing) return;
      outbox.push_back({std::move(data), false});
    }
    cv.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(m);
      closing = true;
    }
    cv.notify_one();
  }

  void write_loop() {
    while (true) {
      std::unique_lock lock(m);
      cv.wait(lock, [&] { return closing || !outbox.empty(); });
      if (outbox.empty()) return;
      auto item = std::move(outbox.front());
      outbox.pop_front();
      lock.unlock();
      if (!net::send_all(fd, item.data)) {
        std::lock_guard relock(m);
        closing = true;
        outbox.clear();
        net::shutdown_fd(fd);
        return;
      }
    }
  }
};

Service::Service(Testbed& testbed, ServiceConfig config) : testbed_(testbed), config_(std::move(config)) {}

Service::~Service() { stop(); }

void Service::start() {
  if (running_) return;
  auto [fd, port] = net::listen_on(config_.host, config_.port);
  listen_fd_ = fd;
  port_ = port;
  running_ = true;
  testbed_.attach_plugin(this);
  acceptor_ = std::thread(&Service::accept_loop, this);
}

void Service::stop() {
  if (!running_.exchange(false)) return;
  testbed_.attach_plugin(nullptr);
  {
    std::lock_guard lock(plugin_mutex_);
    plugin_.reset();
  }
  plugin_cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  net::close_fd(listen_fd_);
  listen_fd_ = -1;
  {
    std::lock_guard lock(conn_mutex_);
    for (auto& c : conns_) {
      c->close();
      net::shutdown_fd(c->fd);
    }
  }
  reap(true);
}

std::size_t Service::connections() const {
  std::lock_guard lock(conn_mutex_);
  return std::size_t(std::count_if(conns_.begin(), conns_.end(), [](const auto& c) { return !c->done; }));
}

void Service::reap(bool all) {
  std::list<std::shared_ptr<Connection>> finished;
  {
    std::lock_guard lock(conn_mutex_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (all || (*it)->done) {
        finished.push_back(*it);
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished) {
    if (c->reader.joinable()) c->reader.join();
    net::close_fd(c->fd);
  }
}

void Service::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    reap(false);
    if (r <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(conn_mutex_);
    conns_.push_back(conn);
    conn->reader = std::thread(&Service::serve, this, conn);
  }
}

void Service::serve(const std::shared_ptr<Connection>& conn) {
  net::Reader in(conn->fd);
  if (auto first = in.line(kHelloTimeout)) {
    if (first->rfind("GET ", 0) == 0) {
      std::vector<std::string> headers;
      while (auto h = in.line(kHelloTimeout)) {
        if (h->empty()) break;
        headers.push_back(*h);
      }
      std::string key;
      bool upgrade = false;
      for (const auto& h : headers) {
        const auto colon = h.find(':');
        if (colon == std::string::npos) continue;
        const auto name = lower(trim(h.substr(0, colon)));
        const auto value = trim(h.substr(colon + 1));
        if (name == "upgrade" && lower(value) == "websocket") upgrade = true;
        if (name == "sec-websocket-key") key = value;
      }
      std::istringstream rl(*first);
      std::string method, target;
      rl >> method >> target;
      if (target == "/ws" && upgrade && !key.empty()) {
        net::send_all(conn->fd, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                                "Sec-WebSocket-Accept: " +
                                    net::websocket_accept(key) + "\r\n\r\n");
        conn->websocket = true;
        std::string partial;
        NextMessage next = [&]() -> std::optional<std::string> {
          while (auto f = net::read_websocket_frame(in)) {
            switch (f->op) {
              case net::WsOpcode::kPing:
                conn->push_raw(net::websocket_frame(net::WsOpcode::kPong, f->payload));
                continue;
              case net::WsOpcode::kPong:
                continue;
              case net::WsOpcode::kClose:
                conn->push_raw(net::websocket_frame(net::WsOpcode::kClose, f->payload.substr(0, 2)));
                return std::nullopt;
              default:
                partial += f->payload;
                if (!f->fin) continue;
                std::string message = std::move(partial);
                partial.clear();
                return message;
            }
          }
          return std::nullopt;
        };
        conn->writer = std::thread(&Connection::write_loop, conn.get());
        if (auto hello = next()) session(conn, *hello, next);
      } else {
        serve_http(conn, target);
      }
    } else {
      conn->writer = std::thread(&Connection::write_loop, conn.get());
      session(conn, *first, [&]() { return in.line(); });
    }
  }
  conn->close();
  if (conn->writer.joinable()) conn->writer.join();
  net::shutdown_fd(conn->fd);
  conn->done = true;
}

bool Service::serve_http(const std::shared_ptr<Connection>& conn, const std::string& target) {
  std::string path = target.substr(0, target.find('?'));
  if (!config_.static_dir.empty()) {
    if (path == "/") path = "/index.html";
    const auto rel = std::filesystem::path(path).relative_path().lexically_normal();
    const bool escapes = rel.empty() || *rel.begin() == "..";
    const auto file = config_.static_dir / rel;
    if (!escapes && std::filesystem::is_regular_file(file)) {
      std::ifstream f(file, std::ios::binary);
      std::ostringstream body;
      body << f.rdbuf();
      return net::send_all(conn->fd, http_response(200, "OK", content_type(file), body.str()));
    }
  } else if (path == "/") {
    return net::send_all(conn->fd, http_response(200, "OK", "text/html; charset=utf-8", kIndexPage));
  }
  return net::send_all(conn->fd, http_response(404, "Not Found", "text/plain", "not found\n"));
}

void Service::enqueue(Connection& conn, MessageKind kind, Json payload, bool stream) {
  {
    std::lock_guard lock(conn.m);
    if (conn.closing) return;
    const WireMessage m{++conn.last_id, kind, kCentral, std::move(payload)};
    conn.outbox.push_back({conn.frame(encode(m)), stream});
    if (conn.outbox.size() > config_.max_outbox) {
      auto it = std::find_if(conn.outbox.begin(), conn.outbox.end(), [](const auto& i) { return i.stream; });
      if (it != conn.outbox.end()) conn.outbox.erase(it);
    }
  }
  conn.cv.notify_one();
}

void Service::session(const std::shared_ptr<Connection>& conn, const std::string& hello, const NextMessage& next) {
  std::istringstream words(hello);
  std::string version, role, extra;
  words >> version >> role >> extra;
  if (version != kProtocolVersion || !extra.empty() || (!role.empty() && role != "optimizer")) {
    const std::string reason = version != kProtocolVersion
                                   ? "unsupported protocol version '" + version + "', expected " +
                                         std::string(kProtocolVersion)
                                   : "bad handshake '" + hello + "'";
    enqueue(*conn, MessageKind::kFault, {{"reason", reason}});
    return;
  }
  conn->push_raw(conn->frame(kProtocolVersion));

  if (role == "optimizer") {
    conn->optimizer = true;
    std::lock_guard lock(plugin_mutex_);
    plugin_ = conn;
  }

  std::weak_ptr<Connection> weak = conn;
  const int token = testbed_.subscribe([this, weak](const std::shared_ptr<const Snapshot>& snap) {
    if (auto c = weak.lock()) enqueue(*c, MessageKind::kStateUpdate, snap->state, true);
  });
  if (auto snap = testbed_.latest()) enqueue(*conn, MessageKind::kStateUpdate, snap->state, true);

  while (running_) {
    auto line = next();
    if (!line) break;
    if (line->empty()) continue;
    handle(conn, *line);
  }
  testbed_.unsubscribe(token);
}

void Service::handle(const std::shared_ptr<Connection>& conn, const std::string& line) {
  WireMessage m;
  try {
    m = decode(line);
  } catch (const WireError& e) {
    enqueue(*conn, MessageKind::kFault, {{"reason", std::string("malformed message: ") + e.what()}});
    return;
  }
  auto fault = [&](const std::string& reason) {
    enqueue(*conn, MessageKind::kFault, {{"reason", reason}, {"ref", m.id}});
  };

  switch (m.kind) {
    case MessageKind::kAck:
    case MessageKind::kFault:
      return;
    case MessageKind::kStateUpdate:
      fault("STATE_UPDATE is not accepted from clients");
      return;
    case MessageKind::kFrameRequest: {
      auto snap = testbed_.latest();
      if (!snap || !snap->world) {
        fault("no frame available yet");
        return;
      }
      const Frame frame = render_overhead(*snap->world);
      enqueue(*conn, MessageKind::kAck,
              {{"ref", m.id},
               {"frame", snap->frame},
               {"format", "ppm"},
               {"encoding", "base64"},
               {"width", frame.width()},
               {"height", frame.height()},
               {"data", net::base64(encode_ppm(frame))}});
      return;
    }
    default:
      break;
  }

  if (m.kind == MessageKind::kSetObjectives && m.payload.contains("request")) {
    if (!conn->optimizer) {
      fault("only an optimizer connection may answer plan requests");
      return;
    }
    const auto rid = m.payload["request"];
    if (!rid.is_number_unsigned()) {
      fault("request must be a non-negative integer");
      return;
    }
    std::map<std::string, Pose2D> objectives;
    try {
      objectives = objectives_from_payload(m.payload);
    } catch (const std::exception& e) {
      fault(e.what());
      return;
    }
    bool accepted = false;
    {
      std::lock_guard lock(plugin_mutex_);
      if (waiting_for_ != 0 && rid.get<std::uint64_t>() == waiting_for_ && !plugin_reply_) {
        plugin_reply_ = std::move(objectives);
        accepted = true;
      }
    }
    if (accepted) plugin_cv_.notify_all();
    enqueue(*conn, MessageKind::kAck, {{"ref", m.id}, {"stale", !accepted}});
    return;
  }

  auto future = testbed_.submit(m);
  if (future.wait_for(std::chrono::duration<double>(config_.reply_timeout)) != std::future_status::ready) {
    fault("central node did not answer in time");
    return;
  }
  const Reply reply = future.get();
  if (!reply.ok) {
    fault(reply.reason);
    return;
  }
  Json payload = reply.extra.is_object() ? reply.extra : Json::object();
  payload["ref"] = m.id;
  enqueue(*conn, MessageKind::kAck, std::move(payload));
}

std::optional<std::map<std::string, Pose2D>> Service::request(const Json& state_update, double deadline_s) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(deadline_s);
  std::unique_lock lock(plugin_mutex_);
  auto conn = plugin_.lock();
  if (!conn || conn->done) return std::nullopt;
  const std::uint64_t rid = ++request_seq_;
  waiting_for_ = rid;
  plugin_reply_.reset();
  Json payload = state_update;
  payload["request"] = rid;
  enqueue(*conn, MessageKind::kStateUpdate, std::move(payload));
  plugin_cv_.wait_until(lock, deadline, [&] { return plugin_reply_.has_value() || !running_; });
  waiting_for_ = 0;
  auto reply = std::move(plugin_reply_);
  plugin_reply_.reset();
  return reply;
}

}  // namespace una
