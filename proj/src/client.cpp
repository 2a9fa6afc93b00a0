#include "una/client.hpp"

#include <chrono>

#include "net_util.hpp"
#include "una/coverage.hpp"

namespace una {

struct Client::Impl {
  int fd = -1;
  net::Reader in{-1};
  IdSequence ids;
  std::string name = "client";
  std::deque<WireMessage> pending;
  bool open = false;

  ~Impl() { net::close_fd(fd); }

  std::optional<WireMessage> read(double timeout_s) {
    while (open) {
      auto line = in.line(timeout_s);
      if (!line) {
        if (!in.timed_out()) open = false;
        return std::nullopt;
      }
      if (line->empty()) continue;
      try {
        return decode(*line);
      } catch (const WireError&) {
        continue;
      }
    }
    return std::nullopt;
  }
};

Client::Client(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Client::Client(Client&&) noexcept = default;
Client& Client::operator=(Client&&) noexcept = default;
Client::~Client() = default;

Client Client::connect(const std::string& host, int port, const std::string& role, std::string version,
                       double timeout_s) {
  auto impl = std::make_unique<Impl>();
  try {
    impl->fd = net::connect_to(host, port);
  } catch (const std::system_error& e) {
    throw ClientError(e.what());
  }
  impl->in = net::Reader(impl->fd);
  impl->open = true;
  if (!role.empty()) impl->name = role;
  const std::string hello = role.empty() ? version : version + " " + role;
  if (!net::send_all(impl->fd, hello + "\n")) throw ClientError("connection closed during handshake");
  auto answer = impl->in.line(timeout_s);
  if (!answer) throw ClientError("no handshake reply from " + host + ":" + std::to_string(port));
  if (*answer != kProtocolVersion) {
    std::string reason = *answer;
    try {
      reason = decode(*answer).payload.value("reason", reason);
    } catch (const WireError&) {
    }
    throw ClientError("handshake refused: " + reason);
  }
  return Client(std::move(impl));
}

std::uint64_t Client::send(MessageKind kind, Json payload) {
  const WireMessage m{impl_->ids.next(), kind, impl_->name, std::move(payload)};
  send_line(encode(m));
  return m.id;
}

void Client::send_line(const std::string& line) {
  if (!impl_->open || !net::send_all(impl_->fd, line + "\n")) {
    impl_->open = false;
    throw ClientError("connection closed");
  }
}

std::optional<WireMessage> Client::receive(double timeout_s) {
  if (!impl_->pending.empty()) {
    auto m = std::move(impl_->pending.front());
    impl_->pending.pop_front();
    return m;
  }
  return impl_->read(timeout_s);
}

std::optional<WireMessage> Client::await_reply(std::uint64_t id, double timeout_s) {
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
  for (auto it = impl_->pending.begin(); it != impl_->pending.end(); ++it) {
    if ((it->kind == MessageKind::kAck || it->kind == MessageKind::kFault) && it->payload.value("ref", 0ull) == id) {
      auto m = std::move(*it);
      impl_->pending.erase(it);
      return m;
    }
  }
  while (true) {
    const double left = std::chrono::duration<double>(deadline - Clock::now()).count();
    if (left <= 0) return std::nullopt;
    auto m = impl_->read(left);
    if (!m) return std::nullopt;
    if ((m->kind == MessageKind::kAck || m->kind == MessageKind::kFault) && m->payload.value("ref", 0ull) == id)
      return m;
    impl_->pending.push_back(std::move(*m));
  }
}

bool Client::connected() const { return impl_ && impl_->open; }

void Client::close() {
  if (!impl_) return;
  impl_->open = false;
  net::shutdown_fd(impl_->fd);
}

std::map<std::string, Pose2D> greedy_plan(const CoverageInstance& instance) {
  return solve_central(instance).assignments;
}

int serve_plugin(Client& client, const PlanFunction& plan, const std::atomic<bool>& stop) {
  int answered = 0;
  while (!stop && client.connected()) {
    auto m = client.receive(0.05);
    if (!m || m->kind != MessageKind::kStateUpdate) continue;
    if (!m->payload.contains("request") || !m->payload.contains("instance")) continue;
    Json reply = objectives_payload(plan(instance_from_json(m->payload["instance"])));
    reply["request"] = m->payload["request"];
    try {
      client.send(MessageKind::kSetObjectives, std::move(reply));
    } catch (const ClientError&) {
      break;
    }
    ++answered;
  }
  return answered;
}

}  // namespace una
