#include "deskctl/server/devices.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace deskctl::server {

std::string_view to_string(ArgKind kind) noexcept {
  switch (kind) {
    case ArgKind::none: return "none";
    case ArgKind::integer: return "integer";
    case ArgKind::integer_list: return "integer-list";
    case ArgKind::string: return "string";
  }
  return "?";
}

namespace {

bool matches(ArgKind kind, const json& v) {
  switch (kind) {
    case ArgKind::none: return v.is_null();
    case ArgKind::integer: return v.is_number_integer();
    case ArgKind::integer_list:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
    case ArgKind::string: return v.is_string();
  }
  return false;
}

std::vector<std::int64_t> ints(const json& payload, std::size_t n, const char* shape) {
  if (payload.size() != n) throw Error(Errc::bad_payload, std::string("expected ") + shape);
  std::vector<std::int64_t> out;
  for (const auto& v : payload) out.push_back(v.get<std::int64_t>());
  return out;
}

std::uint32_t as_u32(std::int64_t v, std::int64_t lo, std::int64_t hi, const char* what) {
  if (v < lo || v > hi) {
    throw Error(Errc::bad_payload, std::string(what) + " out of range [" + std::to_string(lo) + ", " +
                                       std::to_string(hi) + "]");
  }
  return static_cast<std::uint32_t>(v);
}

constexpr std::int64_t kI32Min = std::numeric_limits<std::int32_t>::min();
constexpr std::int64_t kI32Max = std::numeric_limits<std::int32_t>::max();

std::uint32_t axis_of(std::int64_t v) { return as_u32(v, 0, 3, "axis"); }

}  // namespace

Device::Device(std::string name) : name_(std::move(name)) {
  add_command("State", ArgKind::none, ArgKind::string, [this](const json&) { return json(state()); });
  add_command("Status", ArgKind::none, ArgKind::string, [this](const json&) { return json(status()); });
}

void Device::add_command(std::string name, ArgKind input, ArgKind output, Handler handler) {
  commands_.push_back({name, input, output});
  handlers_[std::move(name)] = std::move(handler);
}

json Device::execute(const std::string& command, const json& payload) {
  auto it = handlers_.find(command);
  if (it == handlers_.end()) throw Error(Errc::unknown_command, name_ + " has no command " + command);
  const auto& desc = *std::find_if(commands_.begin(), commands_.end(),
                                   [&](const CommandDescriptor& c) { return c.name == command; });
  if (!matches(desc.input, payload)) {
    throw Error(Errc::bad_payload, command + " takes " + std::string(to_string(desc.input)));
  }
  json result;
  try {
    result = it->second(payload);
  } catch (const Error& e) {
    if (e.code() == Errc::bad_payload || e.code() == Errc::unknown_command) throw;
    throw translate(e);
  }
  if (!matches(desc.output, result)) {
    throw Error(Errc::hardware_error, command + " produced a " + result.type_name());
  }
  return result;
}

std::vector<std::string> Device::events() const { return {"state"}; }

std::unique_ptr<EventSource> Device::open_event(const std::string& event) {
  if (event == "state") return std::make_unique<SampledSource>([this] { return json(state()); });
  throw Error(Errc::unknown_event, name_ + " has no event " + event);
}

json SampledSource::sample() {
  try {
    return sampler_();
  } catch (const Error&) {
    return nullptr;
  }
}

json SampledSource::initial() {
  last_ = sample();
  return last_;
}

std::vector<json> SampledSource::changes() {
  auto v = sample();
  if (v == last_) return {};
  last_ = v;
  return {v};
}

// ---------------------------------------------------------------------------

BoardDevice::BoardDevice(std::string name, station::Station& station, std::string driver,
                         busmap::LogicalId logical)
    : Device(std::move(name)), station_(station), driver_(std::move(driver)), logical_(logical) {
  add_command("ReadChannel", ArgKind::integer, ArgKind::integer, [this](const json& p) {
    auto index = p.get<std::int64_t>();
    const auto& d = station_.drivers().driver(driver_);
    if (index < 0 || index >= static_cast<std::int64_t>(d.channels.size())) {
      throw Error(Errc::bad_payload, "no channel " + std::to_string(index));
    }
    return json(read_channel(static_cast<std::uint32_t>(index)));
  });
}

driver::BoardHandle BoardDevice::handle() const {
  const auto& b = station_.table().binding(logical_);
  if (b.state != busmap::BindingState::bound) throw Error(Errc::binding_missing, "logical " + std::to_string(logical_));
  auto h = station_.drivers().handle(driver_, logical_);
  if (!h) throw Error(Errc::not_attached, driver_ + "/" + std::to_string(logical_));
  return *h;
}

std::uint32_t BoardDevice::read_reg(std::uint32_t offset) const {
  auto h = handle();
  const auto& regs = station_.sim().board(h.io_window.chassis, h.io_window.slot).model().registers;
  int idx = regs.index_of(offset);
  if (idx < 0) throw Error(Errc::unmapped_offset, std::to_string(offset));
  return station_.drivers().port(h).read(offset, regs.at(static_cast<std::size_t>(idx)).width);
}

void BoardDevice::write_reg(std::uint32_t offset, std::uint64_t value) {
  auto h = handle();
  const auto& regs = station_.sim().board(h.io_window.chassis, h.io_window.slot).model().registers;
  int idx = regs.index_of(offset);
  if (idx < 0) throw Error(Errc::unmapped_offset, std::to_string(offset));
  const auto width = regs.at(static_cast<std::size_t>(idx)).width;
  if (value >= hw::width_limit(width)) throw Error(Errc::value_too_wide, std::to_string(value));
  station_.drivers().port(h).write(offset, width, static_cast<std::uint32_t>(value));
}

std::int64_t BoardDevice::read_channel(std::uint32_t index) { return station_.drivers().read_channel(handle(), index); }

std::uint32_t BoardDevice::channel_index(const std::string& channel_name) const {
  for (const auto& ch : station_.drivers().driver(driver_).channels) {
    if (ch.name == channel_name) return ch.index;
  }
  throw Error(Errc::unknown_event, name() + " has no channel " + channel_name);
}

std::string BoardDevice::state() {
  try {
    handle();
    return "ON";
  } catch (const Error&) {
    return "FAULT";
  }
}

std::string BoardDevice::status() {
  const auto& b = station_.table().binding(logical_);
  std::ostringstream out;
  out << "board=" << b.board_type << " logical=" << logical_ << " at=" << b.at.chassis << '/' << b.at.slot;
  if (b.state != busmap::BindingState::bound) {
    out << " binding missing";
  } else if (!station_.drivers().handle(driver_, logical_)) {
    out << " driver not attached";
  }
  return out.str();
}

Error BoardDevice::translate(const Error& error) const {
  return Error(Errc::hardware_error, std::string(deskctl::to_string(error.code())) + ": " + error.detail());
}

std::vector<std::string> BoardDevice::events() const {
  std::vector<std::string> out{"state"};
  for (const auto& ch : station_.drivers().driver(driver_).channels) out.push_back("value:" + ch.name);
  return out;
}

std::unique_ptr<EventSource> BoardDevice::open_event(const std::string& event) {
  if (event.rfind("value:", 0) == 0) {
    auto index = channel_index(event.substr(6));
    return std::make_unique<SampledSource>([this, index] { return json(read_channel(index)); });
  }
  return Device::open_event(event);
}

CounterDevice::CounterDevice(std::string name, station::Station& station, busmap::LogicalId logical)
    : BoardDevice(std::move(name), station, "vct6", logical) {
  add_command("Read", ArgKind::none, ArgKind::integer, [this](const json&) { return json(read_channel(0)); });
  add_command("Preset", ArgKind::integer, ArgKind::none, [this](const json& p) {
    write_reg(hw::vct6::COUNT0, as_u32(p.get<std::int64_t>(), 0, 0xFFFFFFFF, "count"));
    return json();
  });
  // period 0 switches the timer interrupt off
  add_command("SetPeriod", ArgKind::integer, ArgKind::none, [this](const json& p) {
    auto period = as_u32(p.get<std::int64_t>(), 0, 0xFFFFFFFF, "period");
    write_reg(hw::vct6::PERIOD, period);
    auto ctrl = read_reg(hw::vct6::CTRL);
    ctrl = period ? (ctrl | hw::vct6::CTRL_TIMER_IRQ) : (ctrl & ~hw::vct6::CTRL_TIMER_IRQ);
    write_reg(hw::vct6::CTRL, ctrl);
    return json();
  });
}

AdcDevice::AdcDevice(std::string name, station::Station& station, busmap::LogicalId logical)
    : BoardDevice(std::move(name), station, "adc8", logical) {
  add_command("ReadAll", ArgKind::none, ArgKind::integer_list, [this](const json&) {
    json out = json::array();
    for (std::uint32_t k = 0; k < 8; ++k) out.push_back(read_channel(k));
    return out;
  });
  add_command("SetWaveform", ArgKind::integer_list, ArgKind::none, [this](const json& p) {
    auto v = ints(p, 3, "[channel, mode, param]");
    auto ch = as_u32(v[0], 0, 7, "channel");
    auto mode = as_u32(v[1], 0, 2, "mode");
    auto param = as_u32(v[2], 0, 0xFFFF, "param");
    auto modes = read_reg(hw::adc8::WMODE);
    modes = (modes & ~(3u << (2 * ch))) | (mode << (2 * ch));
    write_reg(hw::adc8::WPARAM0 + 4 * ch, param);
    write_reg(hw::adc8::WMODE, modes);
    return json();
  });
}

MotorDevice::MotorDevice(std::string name, station::Station& station, db::PropertyDb& db, busmap::LogicalId logical)
    : BoardDevice(std::move(name), station, "mot4", logical), db_(db) {
  add_command("ReadPos", ArgKind::integer, ArgKind::integer, [this](const json& p) {
    return json(read_channel(axis_of(p.get<std::int64_t>())));
  });
  add_command("Jog", ArgKind::integer_list, ArgKind::none, [this](const json& p) {
    auto v = ints(p, 2, "[axis, delta]");
    auto axis = axis_of(v[0]);
    const std::int64_t pos = read_channel(axis);
    const std::int64_t next = pos + v[1];
    if (v[1] < kI32Min || v[1] > kI32Max || next < kI32Min || next > kI32Max) {
      throw Error(Errc::bad_payload, "position out of range");
    }
    write_reg(hw::mot4::POS0 + 4 * axis, static_cast<std::uint32_t>(static_cast<std::int32_t>(next)));
    return json();
  });
  add_command("Move", ArgKind::integer_list, ArgKind::none, [this](const json& p) {
    auto v = ints(p, 2, "[axis, target]");
    auto axis = axis_of(v[0]);
    if (v[1] < kI32Min || v[1] > kI32Max) throw Error(Errc::bad_payload, "target out of range");
    std::int64_t speed = default_velocity;
    if (auto prop = db_.get(this->name() + ":velocity")) {
      try {
        speed = std::stoll(prop->at(0));
      } catch (const std::exception&) {
        throw Error(Errc::bad_value, this->name() + ":velocity is not an integer");
      }
    }
    if (speed <= 0 || speed > kI32Max) throw Error(Errc::bad_value, this->name() + ":velocity must be positive");
    const std::int64_t pos = read_channel(axis);
    const std::int64_t vel = v[1] >= pos ? speed : -speed;
    write_reg(hw::mot4::VEL0 + 4 * axis, static_cast<std::uint32_t>(static_cast<std::int32_t>(vel)));
    write_reg(hw::mot4::TARGET0 + 4 * axis, static_cast<std::uint32_t>(static_cast<std::int32_t>(v[1])));
    write_reg(hw::mot4::CMD, read_reg(hw::mot4::CMD) | (1u << axis));
    return json();
  });
  add_command("Stop", ArgKind::integer, ArgKind::none, [this](const json& p) {
    auto axis = axis_of(p.get<std::int64_t>());
    write_reg(hw::mot4::CMD, read_reg(hw::mot4::CMD) & ~(1u << axis));
    return json();
  });
}

std::string MotorDevice::state() {
  try {
    return (read_reg(hw::mot4::CMD) & 0xF) ? "MOVING" : "ON";
  } catch (const Error&) {
    return "FAULT";
  }
}

DioDevice::DioDevice(std::string name, station::Station& station, busmap::LogicalId logical)
    : BoardDevice(std::move(name), station, "dio16", logical) {
  add_command("ReadIn", ArgKind::none, ArgKind::integer, [this](const json&) { return json(read_channel(16)); });
  add_command("ReadOut", ArgKind::none, ArgKind::integer, [this](const json&) { return json(read_channel(17)); });
  add_command("WriteOut", ArgKind::integer, ArgKind::none, [this](const json& p) {
    write_reg(hw::dio16::OUT, as_u32(p.get<std::int64_t>(), 0, 0xFFFF, "value"));
    return json();
  });
}

// ---------------------------------------------------------------------------

json record_to_json(const hook::Record& r) {
  return {{"seq", r.event_seq}, {"timestamp", r.timestamp}, {"values", r.values}};
}

std::string render_status(const hook::HookStatus& s) {
  std::ostringstream out;
  out << "armed=" << s.armed << " events_seen=" << s.events_seen << " records_stored=" << s.records_stored
      << " records_total=" << s.records_total << " overruns=" << s.overruns
      << " ignored_after_stop=" << s.ignored_after_stop << " faults=" << s.faults
      << " stopped_at_end=" << s.stopped_at_end << " capture_pending=" << s.capture_pending
      << " lowest_available=" << s.lowest_available;
  return out.str();
}

namespace {

class HookSource final : public EventSource {
 public:
  HookSource(hook::HookEngine& engine, hook::HookId id) : engine_(engine), id_(id) {}

  json initial() override {
    auto batch = engine_.read_records(id_, 0);
    if (batch.records.empty()) return nullptr;
    cursor_ = batch.records.back().event_seq;
    return record_to_json(batch.records.back());
  }

  std::vector<json> changes() override {
    if (engine_.status(id_).events_seen < cursor_) cursor_ = 0;  // re-armed with reset
    std::vector<json> out;
    for (const auto& r : engine_.read_records(id_, cursor_ + 1).records) {
      out.push_back(record_to_json(r));
      cursor_ = r.event_seq;
    }
    return out;
  }

 private:
  hook::HookEngine& engine_;
  hook::HookId id_;
  std::uint64_t cursor_ = 0;
};

template <typename T>
T field(const json& j, const char* name, T fallback) {
  auto it = j.find(name);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::bad_payload, std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

HookDevice::HookDevice(station::Station& station, const DeviceSet& devices)
    : Device("sys/hook/engine"), station_(station), devices_(devices) {
  auto& hooks = station_.hooks();
  add_command("Configure", ArgKind::string, ArgKind::integer, [this, &hooks](const json& p) {
    return json(hooks.configure(parse_config(p.get<std::string>())));
  });
  add_command("Arm", ArgKind::integer, ArgKind::string, [this, &hooks](const json& p) {
    return json(render_status(hooks.arm(hook_id(p))));
  });
  add_command("Reset", ArgKind::integer, ArgKind::string, [this, &hooks](const json& p) {
    return json(render_status(hooks.arm(hook_id(p), true)));
  });
  add_command("Disarm", ArgKind::integer, ArgKind::string, [this, &hooks](const json& p) {
    return json(render_status(hooks.disarm(hook_id(p))));
  });
  add_command("HookStatus", ArgKind::integer, ArgKind::string, [this, &hooks](const json& p) {
    return json(render_status(hooks.status(hook_id(p))));
  });
  add_command("Dump", ArgKind::integer, ArgKind::string, [this, &hooks](const json& p) {
    return json(hooks.dump_csv(hook_id(p)));
  });
  add_command("Trigger", ArgKind::integer, ArgKind::none, [this, &hooks](const json& p) {
    hooks.trigger(hook_id(p));
    return json();
  });
  add_command("List", ArgKind::none, ArgKind::integer_list, [&hooks](const json&) { return json(hooks.hooks()); });
}

hook::HookId HookDevice::hook_id(const json& payload) const {
  auto v = payload.get<std::int64_t>();
  if (v <= 0 || v > std::numeric_limits<hook::HookId>::max()) throw Error(Errc::unknown_hook, std::to_string(v));
  return static_cast<hook::HookId>(v);
}

hook::HookConfig HookDevice::parse_config(const std::string& text) const {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(Errc::bad_payload, "hook spec is not a JSON object");

  auto board = [this](const std::string& device) -> const BoardDevice& {
    const auto* b = dynamic_cast<const BoardDevice*>(devices_.find(device));
    if (!b) throw Error(Errc::unknown_device, device);
    return *b;
  };

  hook::HookConfig c;
  auto channels = doc.find("channels");
  if (channels == doc.end() || !channels->is_array()) throw Error(Errc::bad_payload, "'channels' must be a list");
  for (const auto& ch : *channels) {
    if (!ch.is_string()) throw Error(Errc::bad_payload, "channel entries are \"<device>:<channel>\"");
    const auto& s = ch.get_ref<const std::string&>();
    auto colon = s.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::bad_payload, "channel entries are \"<device>:<channel>\"");
    const auto& dev = board(s.substr(0, colon));
    const auto name = s.substr(colon + 1);
    const auto& decl = station_.drivers().driver(dev.driver()).channels;
    auto it = std::find_if(decl.begin(), decl.end(), [&](const driver::ChannelDecl& d) { return d.name == name; });
    if (it == decl.end()) throw Error(Errc::unknown_channel, s);
    c.channels.push_back({dev.driver(), dev.logical(), it->index});
  }

  const json trigger = doc.value("trigger", json{{"kind", "software"}});
  const auto kind = field<std::string>(trigger, "kind", "software");
  if (kind == "timer") {
    c.trigger = hook::TimerTrigger{field<hook::Tick>(trigger, "period", hook::default_min_timer_period)};
  } else if (kind == "interrupt") {
    const auto& dev = board(field<std::string>(trigger, "device", ""));
    const auto& b = station_.table().binding(dev.logical());
    c.trigger = hook::InterruptTrigger{b.at.chassis, b.at.slot, field<unsigned>(trigger, "line", 0)};
  } else if (kind == "software") {
    c.trigger = hook::SoftwareTrigger{};
  } else {
    throw Error(Errc::bad_payload, "unknown trigger kind '" + kind + "'");
  }

  c.capacity = field<std::size_t>(doc, "capacity", 1);
  const auto mode = field<std::string>(doc, "mode", "linear");
  if (mode == "linear") {
    c.mode = hook::BufferMode::linear;
  } else if (mode == "circular") {
    c.mode = hook::BufferMode::circular;
  } else {
    throw Error(Errc::bad_payload, "unknown mode '" + mode + "'");
  }
  c.async_write = field<bool>(doc, "async_write", false);
  c.capture_delay = field<hook::Tick>(doc, "capture_delay", 0);
  if (auto feeds = doc.find("write_feeds"); feeds != doc.end()) {
    if (!feeds->is_object()) throw Error(Errc::bad_payload, "'write_feeds' maps column to values");
    for (const auto& [column, values] : feeds->items()) {
      try {
        c.write_feeds[std::stoul(column)] = values.get<std::vector<std::uint32_t>>();
      } catch (const std::exception&) {
        throw Error(Errc::bad_payload, "bad write feed for column '" + column + "'");
      }
    }
  }
  return c;
}

std::string HookDevice::status() { return "hooks=" + std::to_string(station_.hooks().hooks().size()); }

std::vector<std::string> HookDevice::events() const {
  std::vector<std::string> out{"state"};
  for (auto id : station_.hooks().hooks()) out.push_back("hook:" + std::to_string(id));
  return out;
}

std::unique_ptr<EventSource> HookDevice::open_event(const std::string& event) {
  if (event.rfind("hook:", 0) == 0) {
    hook::HookId id = 0;
    try {
      id = static_cast<hook::HookId>(std::stoul(event.substr(5)));
    } catch (const std::exception&) {
      throw Error(Errc::unknown_event, event);
    }
    auto ids = station_.hooks().hooks();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) throw Error(Errc::unknown_event, event);
    return std::make_unique<HookSource>(station_.hooks(), id);
  }
  return Device::open_event(event);
}

ClockDevice::ClockDevice(station::Station& station) : Device("sys/sim/clock"), station_(station) {
  add_command("Now", ArgKind::none, ArgKind::integer, [this](const json&) { return json(station_.now()); });
  add_command("Advance", ArgKind::integer, ArgKind::integer, [this](const json& p) {
    station_.advance(as_u32(p.get<std::int64_t>(), 0, 10'000'000, "ticks"));
    return json(station_.now());
  });
}

std::string ClockDevice::status() { return "now=" + std::to_string(station_.now()); }

std::vector<std::string> ClockDevice::events() const { return {"state", "value:now"}; }

std::unique_ptr<EventSource> ClockDevice::open_event(const std::string& event) {
  if (event == "value:now") return std::make_unique<SampledSource>([this] { return json(station_.now()); });
  return Device::open_event(event);
}

// ---------------------------------------------------------------------------

void DeviceSet::add(std::unique_ptr<Device> device) {
  auto name = device->name();
  if (!db::is_valid_device_name(name)) throw Error(Errc::invalid_name, name);
  if (!devices_.emplace(name, std::move(device)).second) throw Error(Errc::duplicate_registration, name);
}

Device* DeviceSet::find(const std::string& name) const {
  auto it = devices_.find(name);
  return it == devices_.end() ? nullptr : it->second.get();
}

std::vector<std::string> DeviceSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, d] : devices_) out.push_back(name);
  return out;
}

void populate(DeviceSet& set, station::Station& station, db::PropertyDb& db) {
  std::map<std::string, int> ordinal;
  for (const auto& [id, b] : station.table().bindings()) {
    const auto& type = b.board_type;
    if (!station.drivers().has_driver(type)) continue;
    const auto n = std::to_string(++ordinal[type]);
    if (type == "vct6") {
      set.add(std::make_unique<CounterDevice>("sim/counter/" + n, station, id));
    } else if (type == "adc8") {
      set.add(std::make_unique<AdcDevice>("sim/adc/" + n, station, id));
    } else if (type == "mot4") {
      set.add(std::make_unique<MotorDevice>("sim/motor/" + n, station, db, id));
    } else if (type == "dio16") {
      set.add(std::make_unique<DioDevice>("sim/dio/" + n, station, id));
    }
  }
  set.add(std::make_unique<HookDevice>(station, set));
  set.add(std::make_unique<ClockDevice>(station));
}

void register_all(const DeviceSet& set, db::PropertyDb& db, const std::string& host, std::uint16_t port,
                  const std::string& server_name) {
  for (const auto& name : set.names()) db.register_device({name, host, port, server_name});
}

}  // namespace deskctl::server
