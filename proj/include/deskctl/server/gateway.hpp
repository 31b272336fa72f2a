#pragma once

#include <functional>
#include <memory>

#include "deskctl/db/property_db.hpp"
#include "deskctl/server/frame.hpp"
#include "deskctl/server/tcp.hpp"

namespace deskctl::server {

/// Browser-facing bridge. HTTP `GET /devices` returns the registry listing;
/// an upgrade to WebSocket opens one native session to the backend server
/// and relays text messages both ways, frame for frame.
class Gateway {
 public:
  using Listing = std::function<json()>;

  Gateway(Endpoint listen, Endpoint backend, Listing listing);  // throws Errc::bind_failed
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  std::uint16_t port() const noexcept;

  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Registry listing as served by `GET /devices`:
/// [{"device":"sim/motor/1","host":"127.0.0.1","port":4100,"server":"deskctl"}, ...]
json registry_listing(const db::PropertyDb& db);

}  // namespace deskctl::server
