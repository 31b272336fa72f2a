#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "deskctl/server/frame.hpp"
#include "deskctl/server/hub.hpp"

namespace deskctl::server {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// "host:port"; throws Errc::invalid_argument.
Endpoint parse_endpoint(const std::string& text);

/// Native protocol listener. Each connection is one hub session served by
/// a reader and a writer thread.
class TcpServer {
 public:
  TcpServer(Hub& hub, Endpoint endpoint);  // port 0 picks a free port; throws Errc::bind_failed
  ~TcpServer();

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  const std::string& host() const noexcept { return host_; }

  void start();
  void stop();

 private:
  struct Connection {
    int fd = -1;
    std::shared_ptr<Session> session;
    std::thread reader;
    std::thread writer;
    std::atomic<bool> finished{false};
  };

  void accept_loop();
  void serve(Connection& c);
  void reap(bool all);

  Hub& hub_;
  std::string host_;
  std::uint16_t port_ = 0;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex connections_mutex_;
  std::list<Connection> connections_;
};

/// Blocking native-protocol client.
class Client {
 public:
  Client(const std::string& host, std::uint16_t port);  // throws Errc::connection_closed
  explicit Client(const Endpoint& endpoint) : Client(endpoint.host, endpoint.port) {}
  ~Client();

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send_text(std::string_view text);
  void send(const json& frame) { send_text(frame.dump()); }

  /// Next frame from the server, including ones set aside while waiting
  /// for a reply. Nullopt on timeout; throws Errc::connection_closed.
  std::optional<json> next(std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

  /// Sends a request (assigning a fresh id) and waits for its reply or ack.
  json call(Request request, std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
  json sync(const std::string& device, const std::string& command, const json& payload = nullptr);
  /// Sends an async request and returns the completion frame.
  json async(const std::string& device, const std::string& command, const json& payload = nullptr);
  json subscribe(const std::string& device, const std::string& event);
  json unsubscribe(std::uint64_t subscription);

  /// First frame matching `pred`, setting others aside.
  template <typename Pred>
  json wait_for(Pred pred, std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

  std::uint64_t next_id() noexcept { return ++last_id_; }

 private:
  std::optional<json> read_frame(std::chrono::milliseconds timeout);

  int fd_ = -1;
  FrameDecoder decoder_;
  std::deque<json> stash_;
  std::uint64_t last_id_ = 0;
};

template <typename Pred>
json Client::wait_for(Pred pred, std::chrono::milliseconds timeout) {
  for (auto it = stash_.begin(); it != stash_.end(); ++it) {
    if (pred(*it)) {
      json f = std::move(*it);
      stash_.erase(it);
      return f;
    }
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() < 0) throw Error(Errc::connection_closed, "timed out waiting for a frame");
    auto f = read_frame(left);
    if (!f) continue;
    if (pred(*f)) return std::move(*f);
    stash_.push_back(std::move(*f));
  }
}

}  // namespace deskctl::server
