#pragma once

#include <cstdint>
#include <mutex>
#include <vector>

#include "deskctl/busmap/mapping.hpp"
#include "deskctl/driver/driver_core.hpp"
#include "deskctl/hook/engine.hpp"
#include "deskctl/hw/sim.hpp"

namespace deskctl::station {

/// One front-end host: the simulated crates with the bus map, driver layer
/// and hook engine wired together.
///
/// advance() steps the clock one tick at a time. Within a tick, capture jobs
/// already due complete first, then the tick's interrupts are dispatched,
/// then hook timers fire, then jobs that became due complete.
///
/// Not internally synchronised beyond the sub-components; callers that share
/// a Station across threads serialise through mutex().
class Station {
 public:
  explicit Station(hw::Topology topology, hw::Tick min_timer_period = hook::default_min_timer_period);

  Station(const Station&) = delete;
  Station& operator=(const Station&) = delete;

  hw::HardwareSim& sim() noexcept { return sim_; }
  const hw::HardwareSim& sim() const noexcept { return sim_; }
  busmap::MappingTable& table() noexcept { return table_; }
  const busmap::MappingTable& table() const noexcept { return table_; }
  driver::DriverCore& drivers() noexcept { return drivers_; }
  hook::HookEngine& hooks() noexcept { return hooks_; }

  void register_builtin_drivers();

  /// Enumerates the current topology, reconciles the table and detaches
  /// drivers from boards that went missing.
  busmap::ChangeReport reconcile();

  /// Attaches the driver named after each bound board's type, skipping
  /// boards already attached to it.
  std::vector<driver::BoardHandle> attach_builtin();

  /// Logical id of the bound board at (chassis, slot).
  busmap::LogicalId logical_at(int chassis, int slot) const;

  std::vector<hw::InterruptEvent> advance(hw::Tick dt);
  hw::Tick now() const noexcept { return sim_.now(); }

  /// Hardware interrupt injected at the current time and dispatched at once.
  hw::InterruptEvent inject(int chassis, int slot, unsigned line);

  /// Refused with Errc::hook_armed while an armed hook uses the board.
  std::uint64_t remove_board(int chassis, int slot);
  std::uint64_t insert_board(int chassis, int slot, hw::SimBoard board);

  std::uint64_t interrupts_produced() const noexcept { return produced_; }

  std::recursive_mutex& mutex() noexcept { return mutex_; }

 private:
  hw::HardwareSim sim_;
  busmap::MappingTable table_;
  driver::DriverCore drivers_;
  hook::HookEngine hooks_;
  std::uint64_t produced_ = 0;
  std::recursive_mutex mutex_;
};

}  // namespace deskctl::station
