#include "deskctl/hook/engine.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

#include "deskctl/error.hpp"

namespace deskctl::hook {

std::string to_string(const ChannelKey& key) {
  return key.driver + ":" + std::to_string(key.logical) + ":" + std::to_string(key.channel);
}

HookEngine::HookEngine(driver::DriverCore& drivers, Tick min_timer_period)
    : drivers_(&drivers), min_period_(min_timer_period) {}

void HookEngine::register_channel(const std::string& driver, std::span<const driver::ChannelDecl> channels) {
  std::unique_lock lock(mutex_);
  if (channels_.count(driver)) throw Error(Errc::duplicate_registration, driver);
  channels_.emplace(driver, std::vector<driver::ChannelDecl>(channels.begin(), channels.end()));
}

AccessPlan HookEngine::plan_access(const ChannelKey& key) {
  std::unique_lock lock(mutex_);
  return plan_access_locked(key);
}

AccessPlan HookEngine::plan_access_locked(const ChannelKey& key) {
  auto d = channels_.find(key.driver);
  if (d == channels_.end() || key.channel >= d->second.size()) {
    throw Error(Errc::unknown_channel, to_string(key));
  }
  if (!drivers_->handle(key.driver, key.logical)) throw Error(Errc::not_attached, to_string(key));
  if (auto cached = plan_cache_.find(key); cached != plan_cache_.end()) return cached->second;

  const auto& ch = d->second[key.channel];
  AccessPlan plan = ch.cost == driver::Cost::simple ? AccessPlan{ProgramPlan{ch.program, ch.kind}}
                                                    : AccessPlan{CallbackRef{key.driver, key.channel}};
  plan_cache_.emplace(key, plan);
  return plan;
}

std::int64_t HookEngine::exec_plan(const AccessPlan& plan, const driver::BoardHandle& board) {
  if (std::holds_alternative<ProgramPlan>(plan)) return exec_locked(plan, board);
  std::shared_lock lock(mutex_);
  return exec_locked(plan, board);
}

std::int64_t HookEngine::exec_locked(const AccessPlan& plan, const driver::BoardHandle& board) {
  auto port = drivers_->port(board);
  if (const auto* p = std::get_if<ProgramPlan>(&plan)) {
    return driver::to_channel_value(run(p->program, port), p->kind);
  }
  const auto& ref = std::get<CallbackRef>(plan);
  auto d = channels_.find(ref.driver);
  if (d == channels_.end() || ref.channel >= d->second.size()) {
    throw Error(Errc::unknown_channel, ref.driver + ":" + std::to_string(ref.channel));
  }
  return d->second[ref.channel].routine(port);
}

HookEngine::Hook& HookEngine::hook_locked(HookId id) {
  auto it = hooks_.find(id);
  if (it == hooks_.end()) throw Error(Errc::unknown_hook, std::to_string(id));
  return it->second;
}

const HookEngine::Hook& HookEngine::hook_locked(HookId id) const {
  auto it = hooks_.find(id);
  if (it == hooks_.end()) throw Error(Errc::unknown_hook, std::to_string(id));
  return it->second;
}

HookId HookEngine::configure(HookConfig config) {
  if (config.channels.empty()) throw Error(Errc::empty_channels);
  if (config.capacity < 1) throw Error(Errc::zero_capacity);
  if (const auto* t = std::get_if<TimerTrigger>(&config.trigger); t && t->period < min_period_) {
    throw Error(Errc::period_too_small,
                std::to_string(t->period) + " < " + std::to_string(min_period_) + " ticks");
  }

  std::unique_lock lock(mutex_);
  Hook h;
  for (const auto& key : config.channels) {
    auto plan = plan_access_locked(key);
    if (std::holds_alternative<CallbackRef>(plan) && !config.async_write) {
      throw Error(Errc::complex_needs_async, to_string(key));
    }
    h.plans.push_back(std::move(plan));
    h.boards.push_back(*drivers_->handle(key.driver, key.logical));
    h.names.push_back(channels_.at(key.driver)[key.channel].name);
  }
  for (const auto& [column, feed] : config.write_feeds) {
    if (column >= h.plans.size() || feed.empty()) {
      throw Error(Errc::invalid_argument, "write feed for column " + std::to_string(column));
    }
    const auto* p = std::get_if<ProgramPlan>(&h.plans[column]);
    bool writes = p && std::any_of(p->program.begin(), p->program.end(),
                                   [](const MicroOp& op) { return op.code == OpCode::write; });
    if (!writes) throw Error(Errc::invalid_argument, "column " + std::to_string(column) + " has no WRITE");
    for (const auto& op : p->program) {
      if (op.code != OpCode::write) continue;
      for (auto v : feed) {
        if (v >= hw::width_limit(op.width)) throw Error(Errc::invalid_argument, "feed value exceeds width");
      }
    }
  }
  h.config = std::move(config);
  HookId id = next_id_++;
  hooks_.emplace(id, std::move(h));
  return id;
}

HookStatus HookEngine::arm(HookId id, bool reset) {
  std::unique_lock lock(mutex_);
  auto& h = hook_locked(id);
  if (h.stopped_at_end && !reset) throw Error(Errc::needs_reset, "hook " + std::to_string(id));
  for (std::size_t i = 0; i < h.config.channels.size(); ++i) {
    const auto& key = h.config.channels[i];
    auto current = drivers_->handle(key.driver, key.logical);
    if (!current) throw Error(Errc::not_attached, to_string(key));
    h.boards[i] = *current;
  }
  if (reset) {
    h.stopped_at_end = false;
    h.events_seen = h.accepted = h.records_total = h.overruns = h.ignored_after_stop = h.faults = 0;
    h.buffer.clear();
    h.in_flight.reset();
  }
  if (h.state != State::armed) {
    h.state = State::armed;
    if (const auto* t = std::get_if<TimerTrigger>(&h.config.trigger)) h.next_fire = now_ + t->period;
  }
  return status_locked(h);
}

HookStatus HookEngine::disarm(HookId id) {
  std::unique_lock lock(mutex_);
  auto& h = hook_locked(id);
  h.state = State::disarmed;
  return status_locked(h);
}

void HookEngine::handle_event(HookId id, Tick timestamp) {
  const auto triggered = WallClock::now();
  std::unique_lock lock(mutex_);
  event_locked(id, hook_locked(id), timestamp, triggered);
}

void HookEngine::trigger(HookId id) {
  const auto triggered = WallClock::now();
  std::unique_lock lock(mutex_);
  auto& h = hook_locked(id);
  event_locked(id, h, now_, triggered);
  run_due_locked(now_);
}

void HookEngine::event_locked(HookId id, Hook& h, Tick timestamp, WallClock::time_point triggered) {
  if (h.state == State::disarmed) return;
  ++h.events_seen;
  if (h.state == State::stopped) {
    ++h.ignored_after_stop;
    return;
  }

  if (h.in_flight && h.in_flight->due <= timestamp) {
    auto job = std::move(*h.in_flight);
    h.in_flight.reset();
    complete_locked(id, h, job);
  }
  if (h.in_flight) {
    ++h.overruns;
    return;
  }

  Job job{h.events_seen, timestamp, timestamp + (h.config.async_write ? h.config.capture_delay : 0), h.plans,
          triggered};
  for (const auto& [column, feed] : h.config.write_feeds) {
    auto& p = std::get<ProgramPlan>(job.plans[column]);
    p.program = with_write_value(p.program, feed[h.accepted % feed.size()]);
  }
  ++h.accepted;

  if (h.config.mode == BufferMode::linear && h.accepted >= h.config.capacity) {
    h.state = State::stopped;
    h.stopped_at_end = true;
  }
  if (h.config.async_write) {
    h.in_flight = std::move(job);
  } else {
    complete_locked(id, h, job);
  }
}

void HookEngine::complete_locked(HookId id, Hook& h, const Job& job) {
  Record rec{job.seq, job.timestamp, {}};
  rec.values.reserve(job.plans.size());
  try {
    for (std::size_t i = 0; i < job.plans.size(); ++i) {
      rec.values.push_back(exec_locked(job.plans[i], h.boards[i]));
    }
  } catch (const Error&) {
    ++h.faults;
    return;
  }
  for (std::size_t i = 0; i < rec.values.size(); ++i) {
    drivers_->note_value(h.boards[i].driver, h.boards[i].logical_id, h.config.channels[i].channel, rec.values[i]);
  }
  if (h.buffer.size() >= h.config.capacity) h.buffer.pop_front();  // circular overwrite
  h.buffer.push_back(rec);
  ++h.records_total;
  if (observer_) observer_(h.buffer.back(), CaptureTiming{id, job.triggered, WallClock::now()});
}

void HookEngine::run_due(Tick now) {
  std::unique_lock lock(mutex_);
  run_due_locked(now);
}

void HookEngine::run_due_locked(Tick now) {
  now_ = std::max(now_, now);
  for (auto& [id, h] : hooks_) {
    if (h.in_flight && h.in_flight->due <= now) {
      auto job = std::move(*h.in_flight);
      h.in_flight.reset();
      complete_locked(id, h, job);
    }
  }
}

void HookEngine::fire_timers(Tick now) {
  const auto triggered = WallClock::now();
  std::unique_lock lock(mutex_);
  now_ = std::max(now_, now);
  for (auto& [id, h] : hooks_) {
    const auto* t = std::get_if<TimerTrigger>(&h.config.trigger);
    if (!t || h.state == State::disarmed) continue;
    while (h.next_fire <= now) {
      Tick at = h.next_fire;
      h.next_fire += t->period;
      event_locked(id, h, at, triggered);
    }
  }
}

void HookEngine::on_interrupt(const hw::InterruptEvent& event) {
  const auto triggered = WallClock::now();
  std::unique_lock lock(mutex_);
  for (auto& [id, h] : hooks_) {
    const auto* t = std::get_if<InterruptTrigger>(&h.config.trigger);
    if (!t || t->chassis != event.chassis || t->slot != event.slot || t->line != event.line) continue;
    event_locked(id, h, event.timestamp, triggered);
  }
}

RecordBatch HookEngine::read_records(HookId id, std::uint64_t from_seq) const {
  std::shared_lock lock(mutex_);
  const auto& h = hook_locked(id);
  RecordBatch batch;
  batch.lowest_available = h.buffer.empty() ? 0 : h.buffer.front().event_seq;
  for (const auto& r : h.buffer) {
    if (r.event_seq >= from_seq) batch.records.push_back(r);
  }
  return batch;
}

HookStatus HookEngine::status(HookId id) const {
  std::shared_lock lock(mutex_);
  return status_locked(hook_locked(id));
}

HookStatus HookEngine::status_locked(const Hook& h) const {
  HookStatus s;
  s.armed = h.state == State::armed;
  s.events_seen = h.events_seen;
  s.records_stored = h.buffer.size();
  s.records_total = h.records_total;
  s.overruns = h.overruns;
  s.ignored_after_stop = h.ignored_after_stop;
  s.faults = h.faults;
  s.stopped_at_end = h.stopped_at_end;
  s.capture_pending = h.in_flight.has_value();
  s.lowest_available = h.buffer.empty() ? 0 : h.buffer.front().event_seq;
  return s;
}

HookConfig HookEngine::config(HookId id) const {
  std::shared_lock lock(mutex_);
  return hook_locked(id).config;
}

std::vector<std::string> HookEngine::column_names(HookId id) const {
  std::shared_lock lock(mutex_);
  return hook_locked(id).names;
}

std::vector<HookId> HookEngine::hooks() const {
  std::shared_lock lock(mutex_);
  std::vector<HookId> ids;
  for (const auto& [id, h] : hooks_) ids.push_back(id);
  return ids;
}

std::string HookEngine::dump_csv(HookId id, std::uint64_t from_seq) const {
  std::shared_lock lock(mutex_);
  const auto& h = hook_locked(id);
  std::ostringstream out;
  out << "seq,timestamp";
  for (const auto& n : h.names) out << ',' << n;
  out << '\n';
  for (const auto& r : h.buffer) {
    if (r.event_seq < from_seq) continue;
    out << r.event_seq << ',' << r.timestamp;
    for (auto v : r.values) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

bool HookEngine::board_in_use(int chassis, int slot) const {
  std::shared_lock lock(mutex_);
  for (const auto& [id, h] : hooks_) {
    if (h.state != State::armed && !h.in_flight) continue;
    if (const auto* t = std::get_if<InterruptTrigger>(&h.config.trigger);
        t && t->chassis == chassis && t->slot == slot) {
      return true;
    }
    for (const auto& b : h.boards) {
      if (b.io_window.chassis == chassis && b.io_window.slot == slot) return true;
    }
  }
  return false;
}

void HookEngine::set_capture_observer(CaptureObserver observer) {
  std::unique_lock lock(mutex_);
  observer_ = std::move(observer);
}

}  // namespace deskctl::hook
