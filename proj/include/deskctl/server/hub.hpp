#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "deskctl/server/devices.hpp"
#include "deskctl/server/frame.hpp"
#include "deskctl/station/station.hpp"

namespace deskctl::server {

inline constexpr std::size_t default_queue_limit = 1024;

/// Outbound side of one client session: an ordered queue of frame texts.
/// Event frames are counted per subscription so a stalled consumer can be
/// detected without bounding replies.
class Session {
 public:
  Session(std::uint64_t id, std::size_t queue_limit) : id_(id), limit_(queue_limit) {}

  std::uint64_t id() const noexcept { return id_; }

  /// Blocks until a frame is queued or the session is closed and drained.
  /// With a timeout, returns nullopt when it expires.
  std::optional<std::string> pop(std::optional<std::chrono::milliseconds> timeout = std::nullopt);
  /// Everything queued right now.
  std::vector<std::string> drain();

  bool closed() const;
  std::size_t queued() const;
  std::size_t pending_events(std::uint64_t subscription) const;

 private:
  friend class Hub;

  struct Entry {
    std::string text;
    std::uint64_t subscription = 0;  // 0: not an event frame
  };

  bool push(std::string text);
  /// False when the subscription already has queue_limit frames pending.
  bool push_event(std::uint64_t subscription, std::string text);
  void close();

  std::uint64_t id_;
  std::size_t limit_;
  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<Entry> queue_;
  std::map<std::uint64_t, std::size_t> pending_;
  bool closed_ = false;
};

/// Request dispatch, async execution and event fan-out for one set of devices.
///
/// Device access is serialised on the station mutex. Change detection runs
/// after every command and every clock tick: each live subscription's source
/// is sampled and every change becomes one event frame.
class Hub {
 public:
  Hub(station::Station& station, DeviceSet& devices, std::size_t queue_limit = default_queue_limit);
  ~Hub();

  Hub(const Hub&) = delete;
  Hub& operator=(const Hub&) = delete;

  std::shared_ptr<Session> open_session();
  /// Drops the session's subscriptions and closes its queue.
  void close_session(const std::shared_ptr<Session>& session);

  /// Handles one inbound frame; answers land in the session queue.
  void handle(const std::shared_ptr<Session>& session, std::string_view text);

  /// Runs a command as the sync path would and returns the payload.
  json execute(const std::string& device, const std::string& command, const json& payload);

  void poll();
  /// Advances the simulated clock tick by tick, polling after each.
  void advance(hw::Tick ticks);

  /// Real-time clock: one tick every `period` until stop_ticker().
  void start_ticker(std::chrono::milliseconds period);
  void stop_ticker();

  /// Blocks until every queued async job has completed.
  void wait_idle();

  std::size_t subscription_count() const;
  std::size_t session_count() const;

  station::Station& station() noexcept { return station_; }
  DeviceSet& devices() noexcept { return devices_; }

 private:
  struct Subscription {
    std::weak_ptr<Session> session;
    std::string device;
    std::string event;
    std::unique_ptr<EventSource> source;
    std::uint64_t seq = 0;
  };

  struct Job {
    std::weak_ptr<Session> session;
    std::uint64_t id = 0;
    std::uint64_t ticket = 0;
    std::string device;
    std::string command;
    json payload;
  };

  void dispatch(const std::shared_ptr<Session>& session, const Request& request);
  json execute_locked(const std::string& device, const std::string& command, const json& payload);
  void subscribe_locked(const std::shared_ptr<Session>& session, const Request& request);
  void unsubscribe_locked(const std::shared_ptr<Session>& session, const Request& request);
  /// False when the subscription overflowed and was closed.
  bool publish_locked(std::uint64_t id, Subscription& sub, json payload);
  void poll_locked();
  void worker_loop();

  station::Station& station_;
  DeviceSet& devices_;
  std::size_t queue_limit_;

  // guarded by station_.mutex()
  std::map<std::uint64_t, Subscription> subscriptions_;
  std::map<std::uint64_t, std::weak_ptr<Session>> sessions_;
  std::uint64_t next_subscription_ = 1;
  std::uint64_t next_session_ = 1;

  std::atomic<std::uint64_t> next_ticket_{1};
  std::mutex jobs_mutex_;
  std::condition_variable jobs_ready_;
  std::condition_variable jobs_done_;
  std::deque<Job> jobs_;
  bool job_running_ = false;
  bool stopping_ = false;
  std::thread worker_;

  std::mutex ticker_mutex_;
  std::condition_variable ticker_wake_;
  bool ticker_stop_ = false;
  std::thread ticker_;
};

}  // namespace deskctl::server
