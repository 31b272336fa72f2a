#include "deskctl/station/station.hpp"

#include "deskctl/driver/builtin.hpp"
#include "deskctl/error.hpp"

namespace deskctl::station {

Station::Station(hw::Topology topology, hw::Tick min_timer_period)
    : sim_(std::move(topology)), drivers_(sim_), hooks_(drivers_, min_timer_period) {
  drivers_.set_channel_registry(&hooks_);
  drivers_.set_trigger_sink(&hooks_);
}

void Station::register_builtin_drivers() {
  for (auto& d : driver::builtin_drivers()) drivers_.register_driver(std::move(d));
}

busmap::ChangeReport Station::reconcile() {
  auto report = table_.reconcile(busmap::enumerate(sim_.topology()));
  drivers_.detach_unbound(table_);
  return report;
}

std::vector<driver::BoardHandle> Station::attach_builtin() {
  std::vector<driver::BoardHandle> attached;
  for (const auto& [id, b] : table_.bindings()) {
    if (b.state != busmap::BindingState::bound || !drivers_.has_driver(b.board_type)) continue;
    if (drivers_.handle(b.board_type, id)) continue;
    attached.push_back(drivers_.attach(b.board_type, id, table_));
  }
  return attached;
}

busmap::LogicalId Station::logical_at(int chassis, int slot) const {
  for (const auto& [id, b] : table_.bindings()) {
    if (b.state == busmap::BindingState::bound && b.at == busmap::SlotAddress{chassis, slot}) return id;
  }
  throw Error(Errc::unknown_ref, "no bound board at " + std::to_string(chassis) + "/" + std::to_string(slot));
}

std::vector<hw::InterruptEvent> Station::advance(hw::Tick dt) {
  std::vector<hw::InterruptEvent> all;
  for (hw::Tick i = 0; i < dt; ++i) {
    auto events = sim_.advance_clock(1);
    const auto now = sim_.now();
    hooks_.run_due(now);
    for (const auto& ev : events) {
      ++produced_;
      drivers_.dispatch_interrupt(ev);
    }
    hooks_.fire_timers(now);
    hooks_.run_due(now);
    all.insert(all.end(), events.begin(), events.end());
  }
  return all;
}

hw::InterruptEvent Station::inject(int chassis, int slot, unsigned line) {
  auto ev = sim_.inject_interrupt(chassis, slot, line);
  ++produced_;
  drivers_.dispatch_interrupt(ev);
  hooks_.run_due(sim_.now());
  return ev;
}

std::uint64_t Station::remove_board(int chassis, int slot) {
  if (hooks_.board_in_use(chassis, slot)) {
    throw Error(Errc::hook_armed, std::to_string(chassis) + "/" + std::to_string(slot));
  }
  return sim_.remove_board(chassis, slot);
}

std::uint64_t Station::insert_board(int chassis, int slot, hw::SimBoard board) {
  return sim_.insert_board(chassis, slot, std::move(board));
}

}  // namespace deskctl::station
