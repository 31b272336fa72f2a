#include "deskctl/server/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace deskctl::server {

namespace {

bool write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

addrinfo* resolve(const std::string& host, std::uint16_t port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  auto service = std::to_string(port);
  if (::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res) != 0) return nullptr;
  return res;
}

void no_delay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::invalid_argument, "endpoint '" + text + "' is not host:port");
  Endpoint e;
  e.host = text.substr(0, colon);
  try {
    std::size_t used = 0;
    auto port = std::stoul(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1 || port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw Error(Errc::invalid_argument, "endpoint '" + text + "' has a bad port");
  }
  if (e.host.empty()) e.host = "0.0.0.0";
  return e;
}

TcpServer::TcpServer(Hub& hub, Endpoint endpoint) : hub_(hub), host_(endpoint.host) {
  addrinfo* res = resolve(endpoint.host, endpoint.port, true);
  if (!res) throw Error(Errc::bind_failed, "cannot resolve " + endpoint.host);
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (listen_fd_ < 0 || ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (listen_fd_ >= 0) ::close(listen_fd_);
    throw Error(Errc::bind_failed, endpoint.host + ":" + std::to_string(endpoint.port) + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpServer::~TcpServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpServer::start() {
  if (running_.exchange(true)) return;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  acceptor_.join();
  reap(true);
}

void TcpServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    int r = ::poll(&p, 1, 200);
    reap(false);
    if (r <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    no_delay(fd);
    std::lock_guard lock(connections_mutex_);
    auto& c = connections_.emplace_back();
    c.fd = fd;
    c.session = hub_.open_session();
    serve(c);
  }
}

void TcpServer::serve(Connection& c) {
  c.writer = std::thread([&c] {
    while (auto frame = c.session->pop()) {
      if (!write_all(c.fd, encode_frame(*frame))) break;
    }
    ::shutdown(c.fd, SHUT_RDWR);
  });
  c.reader = std::thread([this, &c] {
    FrameDecoder decoder;
    char buf[65536];
    try {
      for (;;) {
        ssize_t n = ::recv(c.fd, buf, sizeof buf, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        decoder.feed(buf, static_cast<std::size_t>(n));
        while (auto text = decoder.next()) hub_.handle(c.session, *text);
      }
    } catch (const Error&) {
      // oversized frame: the stream cannot be resynchronised
    }
    hub_.close_session(c.session);
    c.finished = true;
  });
}

void TcpServer::reap(bool all) {
  std::lock_guard lock(connections_mutex_);
  for (auto it = connections_.begin(); it != connections_.end();) {
    if (all && !it->finished) ::shutdown(it->fd, SHUT_RDWR);
    if (all || it->finished) {
      it->reader.join();
      it->writer.join();
      ::close(it->fd);
      it = connections_.erase(it);
    } else {
      ++it;
    }
  }
}

// ---------------------------------------------------------------------------

Client::Client(const std::string& host, std::uint16_t port) {
  addrinfo* res = resolve(host, port, false);
  if (!res) throw Error(Errc::connection_closed, "cannot resolve " + host);
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
    const std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (fd_ >= 0) ::close(fd_);
    throw Error(Errc::connection_closed, host + ":" + std::to_string(port) + ": " + why);
  }
  ::freeaddrinfo(res);
  no_delay(fd_);
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

void Client::send_text(std::string_view text) {
  if (!write_all(fd_, encode_frame(text))) throw Error(Errc::connection_closed, "send failed");
}

std::optional<json> Client::read_frame(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (auto text = decoder_.next()) {
      auto j = json::parse(*text, nullptr, false);
      if (j.is_discarded()) throw Error(Errc::bad_frame, "server sent a non-JSON frame");
      return j;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() < 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    int r = ::poll(&p, 1, static_cast<int>(left.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) return std::nullopt;
    char buf[65536];
    ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(Errc::connection_closed, "server closed the connection");
    decoder_.feed(buf, static_cast<std::size_t>(n));
  }
}

std::optional<json> Client::next(std::chrono::milliseconds timeout) {
  if (!stash_.empty()) {
    json f = std::move(stash_.front());
    stash_.pop_front();
    return f;
  }
  return read_frame(timeout);
}

json Client::call(Request request, std::chrono::milliseconds timeout) {
  request.id = next_id();
  send(request_to_json(request));
  const auto id = request.id;
  return wait_for(
      [id](const json& f) {
        auto kind = f.value("kind", "");
        return (kind == "reply" || kind == "ack" || kind == "error") && f.contains("id") && f["id"] == id;
      },
      timeout);
}

json Client::sync(const std::string& device, const std::string& command, const json& payload) {
  Request r;
  r.kind = RequestKind::sync;
  r.device = device;
  r.command = command;
  r.payload = payload;
  return call(std::move(r));
}

json Client::async(const std::string& device, const std::string& command, const json& payload) {
  Request r;
  r.kind = RequestKind::async;
  r.device = device;
  r.command = command;
  r.payload = payload;
  auto a = call(std::move(r));
  if (a.value("kind", "") != "ack") return a;
  const auto ticket = a["ticket"];
  return wait_for([&](const json& f) { return f.value("kind", "") == "completion" && f["ticket"] == ticket; });
}

json Client::subscribe(const std::string& device, const std::string& event) {
  Request r;
  r.kind = RequestKind::subscribe;
  r.device = device;
  r.event = event;
  return call(std::move(r));
}

json Client::unsubscribe(std::uint64_t subscription) {
  Request r;
  r.kind = RequestKind::unsubscribe;
  r.subscription = subscription;
  return call(std::move(r));
}

}  // namespace deskctl::server
