#include "deskctl/driver/driver_core.hpp"

#include <algorithm>
#include <sstream>

#include "deskctl/error.hpp"

namespace deskctl::driver {

namespace {

// Host bus layout: each bus kind gets its own aperture; remote crates sit
// behind their extender window, one 64 KiB window per slot.
std::uint64_t aperture(hw::BusKind kind) {
  switch (kind) {
    case hw::BusKind::host_pci: return 0x0'8000'0000ull;
    case hw::BusKind::remote_vme: return 0x1'0000'0000ull;
    case hw::BusKind::remote_cpci: return 0x2'0000'0000ull;
  }
  return 0;
}

constexpr std::uint64_t kWindowSize = 0x1'0000;

std::uint64_t window_base(hw::BusKind kind, int chassis, int slot) {
  return aperture(kind) + static_cast<std::uint64_t>(chassis) * 0x100'0000ull +
         static_cast<std::uint64_t>(slot) * kWindowSize;
}

}  // namespace

std::string_view to_string(Cost cost) noexcept { return cost == Cost::simple ? "simple" : "complex"; }

std::int64_t to_channel_value(const hook::ProgramResult& result, ValueKind kind) noexcept {
  if (kind == ValueKind::unsigned_value || result.width >= 64) return result.value;
  const std::uint64_t sign = std::uint64_t{1} << (result.width - 1);
  const std::uint64_t v = result.value & ((sign << 1) - 1);
  return static_cast<std::int64_t>(v ^ sign) - static_cast<std::int64_t>(sign);
}

std::uint32_t BoardPort::read(std::uint32_t offset, unsigned width) {
  auto [chassis, slot, off] = core_->decode(window_.base + offset);
  const auto& board = sim_->board(chassis, slot);
  int idx = board.model().registers.index_of(off);
  if (idx < 0 || board.model().registers.at(static_cast<std::size_t>(idx)).width != width) {
    throw Error(Errc::unmapped_offset, board.type() + " offset " + std::to_string(off) + " width " +
                                           std::to_string(width));
  }
  return board.read(off);
}

void BoardPort::write(std::uint32_t offset, unsigned width, std::uint32_t value) {
  auto [chassis, slot, off] = core_->decode(window_.base + offset);
  auto& board = sim_->board(chassis, slot);
  int idx = board.model().registers.index_of(off);
  if (idx < 0 || board.model().registers.at(static_cast<std::size_t>(idx)).width != width) {
    throw Error(Errc::unmapped_offset, board.type() + " offset " + std::to_string(off) + " width " +
                                           std::to_string(width));
  }
  board.write(off, value);
}

void DriverCore::register_driver(DriverDescriptor descriptor) {
  const auto& model = hw::board_model(descriptor.board_type);
  for (std::size_t i = 0; i < descriptor.channels.size(); ++i) {
    auto& ch = descriptor.channels[i];
    if (ch.index != i) throw Error(Errc::invalid_argument, descriptor.name + ": channel indices must be dense");
    if (ch.cost == Cost::simple) {
      hook::validate(ch.program, &model.registers);
    } else if (!ch.routine) {
      throw Error(Errc::invalid_argument, descriptor.name + ": complex channel " + ch.name + " has no routine");
    }
  }
  {
    std::lock_guard lock(mutex_);
    if (drivers_.count(descriptor.name)) throw Error(Errc::duplicate_driver, descriptor.name);
  }
  // the hook engine sees the channels before the driver becomes visible
  if (registry_) registry_->register_channel(descriptor.name, descriptor.channels);
  std::lock_guard lock(mutex_);
  auto name = descriptor.name;
  drivers_.emplace(std::move(name), std::move(descriptor));
}

bool DriverCore::has_driver(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return drivers_.count(name) != 0;
}

const DriverDescriptor& DriverCore::driver(const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto it = drivers_.find(name);
  if (it == drivers_.end()) throw Error(Errc::unknown_driver, name);
  return it->second;  // descriptors are never removed
}

const ChannelDecl& DriverCore::channel(const std::string& driver_name, std::uint32_t index) const {
  const auto& d = driver(driver_name);
  if (index >= d.channels.size()) {
    throw Error(Errc::unknown_channel, driver_name + " ch" + std::to_string(index));
  }
  return d.channels[index];
}

BoardHandle DriverCore::attach(const std::string& driver_name, busmap::LogicalId logical,
                               const busmap::MappingTable& table,
                               std::optional<std::vector<unsigned>> irq_lines) {
  const auto& d = driver(driver_name);
  const auto& binding = table.binding(logical);  // unknown-ref
  if (binding.state == busmap::BindingState::missing) {
    throw Error(Errc::binding_missing, "logical " + std::to_string(logical));
  }
  if (binding.board_type != d.board_type) {
    throw Error(Errc::type_mismatch, driver_name + " cannot drive " + binding.board_type);
  }
  table.resolve(logical, sim_->generation());  // stale-generation check

  const auto& board = sim_->board(binding.at.chassis, binding.at.slot);
  std::vector<unsigned> lines;
  if (irq_lines) {
    lines = *irq_lines;
    for (unsigned l : lines) {
      if (l >= board.irq_lines()) throw Error(Errc::invalid_line, std::to_string(l));
    }
  } else {
    for (unsigned l = 0; l < board.irq_lines(); ++l) lines.push_back(l);
  }
  std::sort(lines.begin(), lines.end());
  lines.erase(std::unique(lines.begin(), lines.end()), lines.end());

  BoardHandle h{driver_name, logical,
                IoWindow{binding.at.chassis, binding.at.slot,
                         window_base(sim_->bus_kind(binding.at.chassis), binding.at.chassis, binding.at.slot)},
                lines};

  std::lock_guard lock(mutex_);
  HandleKey key{driver_name, logical};
  if (handles_.count(key)) throw Error(Errc::already_attached, driver_name + "/" + std::to_string(logical));
  for (unsigned l : lines) {
    if (routes_.count({h.io_window.chassis, h.io_window.slot, l})) {
      throw Error(Errc::already_attached, "irq line " + std::to_string(l) + " already routed");
    }
  }
  for (unsigned l : lines) routes_[{h.io_window.chassis, h.io_window.slot, l}] = key;
  windows_[h.io_window.base] = h.io_window;
  handles_[key] = h;
  last_values_[key].assign(d.channels.size(), std::nullopt);
  return h;
}

void DriverCore::detach(const std::string& driver_name, busmap::LogicalId logical) {
  std::lock_guard lock(mutex_);
  HandleKey key{driver_name, logical};
  auto it = handles_.find(key);
  if (it == handles_.end()) throw Error(Errc::not_attached, driver_name + "/" + std::to_string(logical));
  for (auto r = routes_.begin(); r != routes_.end();) {
    r = r->second == key ? routes_.erase(r) : std::next(r);
  }
  const auto base = it->second.io_window.base;
  handles_.erase(it);
  last_values_.erase(key);
  bool shared = std::any_of(handles_.begin(), handles_.end(),
                            [&](const auto& kv) { return kv.second.io_window.base == base; });
  if (!shared) windows_.erase(base);
}

std::vector<BoardHandle> DriverCore::detach_unbound(const busmap::MappingTable& table) {
  std::vector<BoardHandle> gone;
  for (const auto& h : handles()) {
    const auto& bindings = table.bindings();
    auto it = bindings.find(h.logical_id);
    if (it == bindings.end() || it->second.state != busmap::BindingState::bound) {
      detach(h.driver, h.logical_id);
      gone.push_back(h);
    }
  }
  return gone;
}

std::optional<BoardHandle> DriverCore::handle(const std::string& driver_name, busmap::LogicalId logical) const {
  std::lock_guard lock(mutex_);
  auto it = handles_.find({driver_name, logical});
  if (it == handles_.end()) return std::nullopt;
  return it->second;
}

std::vector<BoardHandle> DriverCore::handles() const {
  std::lock_guard lock(mutex_);
  std::vector<BoardHandle> out;
  for (const auto& [k, h] : handles_) out.push_back(h);
  return out;
}

std::tuple<int, int, std::uint32_t> DriverCore::decode(std::uint64_t host_address) const {
  std::lock_guard lock(mutex_);
  auto it = windows_.upper_bound(host_address);
  if (it == windows_.begin()) throw Error(Errc::unmapped_offset, "no window for host address");
  --it;
  const auto offset = host_address - it->first;
  if (offset >= kWindowSize) throw Error(Errc::unmapped_offset, "no window for host address");
  return {it->second.chassis, it->second.slot, static_cast<std::uint32_t>(offset)};
}

std::int64_t DriverCore::read_channel(const BoardHandle& handle, std::uint32_t index) {
  const auto& ch = channel(handle.driver, index);
  auto p = port(handle);
  std::int64_t value = ch.cost == Cost::simple ? to_channel_value(hook::run(ch.program, p), ch.kind)
                                               : ch.routine(p);
  note_value(handle.driver, handle.logical_id, index, value);
  return value;
}

void DriverCore::note_value(const std::string& driver_name, busmap::LogicalId logical, std::uint32_t index,
                            std::int64_t value) {
  std::lock_guard lock(mutex_);
  auto it = last_values_.find({driver_name, logical});
  if (it != last_values_.end() && index < it->second.size()) it->second[index] = value;
}

std::string DriverCore::export_state() const {
  std::lock_guard lock(mutex_);
  std::ostringstream out;
  out << "/drivers\n";
  for (const auto& [name, d] : drivers_) {
    out << "/drivers/" << name << '\n';
    for (auto it = handles_.lower_bound({name, 0}); it != handles_.end() && it->first.first == name; ++it) {
      const auto& h = it->second;
      out << "/drivers/" << name << '/' << h.logical_id << ": board=" << h.logical_id
          << " at=" << h.io_window.chassis << '/' << h.io_window.slot << " irq=[";
      for (std::size_t i = 0; i < h.irq_lines.size(); ++i) out << (i ? "," : "") << h.irq_lines[i];
      out << "]\n";
      const auto& last = last_values_.at(it->first);
      for (const auto& ch : d.channels) {
        out << "  ch" << ch.index << ' ' << ch.name << ' ' << to_string(ch.cost) << " last=";
        if (last[ch.index]) {
          out << *last[ch.index];
        } else {
          out << "none";
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

void DriverCore::dispatch_interrupt(const hw::InterruptEvent& event) {
  BoardHandle h;
  InterruptHandler handler;
  {
    std::lock_guard lock(mutex_);
    auto r = routes_.find({event.chassis, event.slot, event.line});
    if (r == routes_.end()) {
      ++dropped_;
      return;
    }
    ++handled_;
    h = handles_.at(r->second);
    handler = drivers_.at(h.driver).on_interrupt;
  }
  bool forward = true;
  if (handler) {
    IrqContext ctx(*this, h);
    forward = handler(event, ctx);
  }
  if (forward && sink_) sink_->on_interrupt(event);
}

std::uint64_t DriverCore::handled_interrupts() const {
  std::lock_guard lock(mutex_);
  return handled_;
}

std::uint64_t DriverCore::dropped_interrupts() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

std::int64_t IrqContext::read(std::uint32_t channel) {
  const auto& ch = core_->channel(handle_->driver, channel);
  if (ch.cost == Cost::complex) {
    throw Error(Errc::complex_in_irq, handle_->driver + " " + ch.name + " must go through the hook's async path");
  }
  return core_->read_channel(*handle_, channel);
}

std::uint32_t IrqContext::run(const hook::Program& program) {
  auto p = core_->port(*handle_);
  return hook::run(program, p).value;
}

}  // namespace deskctl::driver
