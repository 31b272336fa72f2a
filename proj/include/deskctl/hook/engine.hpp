#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "deskctl/driver/driver_core.hpp"
#include "deskctl/hook/program.hpp"
#include "deskctl/hw/sim.hpp"

namespace deskctl::hook {

using hw::Tick;
using HookId = std::uint32_t;

inline constexpr Tick default_min_timer_period = 10;

/// Driver name, board and channel to be read.
struct ChannelKey {
  std::string driver;
  busmap::LogicalId logical = 0;
  std::uint32_t channel = 0;

  friend auto operator<=>(const ChannelKey&, const ChannelKey&) = default;
};

std::string to_string(const ChannelKey& key);  // "vct6:1:0"

/// A compiled read-program plus the signedness of the channel it reads.
struct ProgramPlan {
  Program program;
  driver::ValueKind kind = driver::ValueKind::unsigned_value;

  friend bool operator==(const ProgramPlan&, const ProgramPlan&) = default;
};

/// Opaque reference to a driver read routine.
struct CallbackRef {
  std::string driver;
  std::uint32_t channel = 0;

  friend bool operator==(const CallbackRef&, const CallbackRef&) = default;
};

using AccessPlan = std::variant<ProgramPlan, CallbackRef>;

struct TimerTrigger {
  Tick period = default_min_timer_period;
};
struct InterruptTrigger {
  int chassis = 0;
  int slot = 0;
  unsigned line = 0;
};
struct SoftwareTrigger {};
using Trigger = std::variant<TimerTrigger, InterruptTrigger, SoftwareTrigger>;

enum class BufferMode { linear, circular };

struct HookConfig {
  std::vector<ChannelKey> channels;  // record column order
  Trigger trigger = SoftwareTrigger{};
  std::size_t capacity = 1;
  BufferMode mode = BufferMode::linear;
  bool async_write = false;
  /// Async path only: ticks a capture job needs before its record is written.
  Tick capture_delay = 0;
  /// Column -> WRITE constants; the k-th stored record uses entry k (mod size).
  std::map<std::size_t, std::vector<std::uint32_t>> write_feeds;
};

struct Record {
  std::uint64_t event_seq = 0;
  Tick timestamp = 0;
  std::vector<std::int64_t> values;

  friend bool operator==(const Record&, const Record&) = default;
};

struct HookStatus {
  bool armed = false;
  std::uint64_t events_seen = 0;
  std::uint64_t records_stored = 0;  // currently in the buffer
  std::uint64_t records_total = 0;   // ever written, including overwritten ones
  std::uint64_t overruns = 0;
  std::uint64_t ignored_after_stop = 0;
  std::uint64_t faults = 0;  // captures aborted by a register error
  bool stopped_at_end = false;
  bool capture_pending = false;
  std::uint64_t lowest_available = 0;  // 0 when the buffer is empty
};

struct RecordBatch {
  std::vector<Record> records;
  std::uint64_t lowest_available = 0;
};

using WallClock = std::chrono::steady_clock;

struct CaptureTiming {
  HookId hook = 0;
  WallClock::time_point triggered;
  WallClock::time_point committed;
};

/// Called under the engine lock each time a record is committed.
using CaptureObserver = std::function<void(const Record&, const CaptureTiming&)>;

/// Event-triggered multi-channel recorder.
///
/// Drivers register their channels at registration time. A configured hook
/// compiles one access plan per column; on each trigger it either captures
/// synchronously or, with async_write, queues one capture job that completes
/// capture_delay ticks later. A trigger that finds the previous job still
/// running is counted as an overrun and dropped whole. Linear buffers stop at
/// capacity; circular buffers overwrite the oldest record.
///
/// One writer (the event path) and any number of concurrent readers.
class HookEngine final : public driver::ChannelRegistry, public driver::TriggerSink {
 public:
  explicit HookEngine(driver::DriverCore& drivers, Tick min_timer_period = default_min_timer_period);

  void register_channel(const std::string& driver, std::span<const driver::ChannelDecl> channels) override;

  AccessPlan plan_access(const ChannelKey& key);
  std::int64_t exec_plan(const AccessPlan& plan, const driver::BoardHandle& board);

  HookId configure(HookConfig config);
  HookStatus arm(HookId id, bool reset = false);
  HookStatus disarm(HookId id);

  void handle_event(HookId id, Tick timestamp);
  /// Software trigger at the current time.
  void trigger(HookId id);

  void on_interrupt(const hw::InterruptEvent& event) override;
  /// Completes capture jobs due at or before `now`.
  void run_due(Tick now);
  /// Fires timer triggers due at or before `now`.
  void fire_timers(Tick now);

  RecordBatch read_records(HookId id, std::uint64_t from_seq) const;
  HookStatus status(HookId id) const;
  HookConfig config(HookId id) const;
  std::vector<std::string> column_names(HookId id) const;
  std::vector<HookId> hooks() const;

  /// CSV: `seq,timestamp,<channel names...>` then one row per record.
  std::string dump_csv(HookId id, std::uint64_t from_seq = 0) const;

  /// True when an armed hook, or a pending capture, involves the board.
  bool board_in_use(int chassis, int slot) const;

  Tick min_timer_period() const noexcept { return min_period_; }
  void set_capture_observer(CaptureObserver observer);

 private:
  enum class State { disarmed, armed, stopped };

  struct Job {
    std::uint64_t seq = 0;
    Tick timestamp = 0;
    Tick due = 0;
    std::vector<AccessPlan> plans;
    WallClock::time_point triggered;
  };

  struct Hook {
    HookConfig config;
    std::vector<AccessPlan> plans;
    std::vector<driver::BoardHandle> boards;
    std::vector<std::string> names;
    State state = State::disarmed;
    bool stopped_at_end = false;
    Tick next_fire = 0;
    std::uint64_t events_seen = 0;
    std::uint64_t accepted = 0;
    std::uint64_t records_total = 0;
    std::uint64_t overruns = 0;
    std::uint64_t ignored_after_stop = 0;
    std::uint64_t faults = 0;
    std::deque<Record> buffer;
    std::optional<Job> in_flight;
  };

  AccessPlan plan_access_locked(const ChannelKey& key);
  std::int64_t exec_locked(const AccessPlan& plan, const driver::BoardHandle& board);
  Hook& hook_locked(HookId id);
  const Hook& hook_locked(HookId id) const;
  HookStatus status_locked(const Hook& h) const;
  void event_locked(HookId id, Hook& h, Tick timestamp, WallClock::time_point triggered);
  void complete_locked(HookId id, Hook& h, const Job& job);
  void run_due_locked(Tick now);

  driver::DriverCore* drivers_;
  Tick min_period_;
  Tick now_ = 0;

  mutable std::shared_mutex mutex_;
  std::map<std::string, std::vector<driver::ChannelDecl>> channels_;
  std::map<ChannelKey, AccessPlan> plan_cache_;
  std::map<HookId, Hook> hooks_;
  HookId next_id_ = 1;
  CaptureObserver observer_;
};

}  // namespace deskctl::hook
