#include "deskctl/hw/sim.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "deskctl/error.hpp"

namespace deskctl::hw {

std::string_view to_string(BusKind kind) noexcept {
  switch (kind) {
    case BusKind::host_pci: return "host-pci";
    case BusKind::remote_vme: return "remote-vme";
    case BusKind::remote_cpci: return "remote-cpci";
  }
  return "host-pci";
}

BusKind parse_bus_kind(std::string_view text) {
  if (text == "host-pci") return BusKind::host_pci;
  if (text == "remote-vme") return BusKind::remote_vme;
  if (text == "remote-cpci") return BusKind::remote_cpci;
  throw Error(Errc::malformed_spec, "unknown bus_kind '" + std::string(text) + "'");
}

const SimCrate* Topology::crate(int chassis) const noexcept {
  for (const auto& c : crates) {
    if (c.chassis == chassis) return &c;
  }
  return nullptr;
}

SimCrate* Topology::crate(int chassis) noexcept {
  for (auto& c : crates) {
    if (c.chassis == chassis) return &c;
  }
  return nullptr;
}

std::size_t Topology::board_count() const noexcept {
  std::size_t n = 0;
  for (const auto& c : crates) n += c.slots.size();
  return n;
}

Topology parse_topology(std::string_view json_text) {
  // The JSON parser keeps the last of repeated keys, so repeated slot keys
  // are caught while parsing.
  std::vector<std::vector<std::string>> open_objects;
  std::string repeated;
  auto watch = [&](int, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
    using E = nlohmann::json::parse_event_t;
    if (event == E::object_start) {
      open_objects.emplace_back();
    } else if (event == E::object_end && !open_objects.empty()) {
      open_objects.pop_back();
    } else if (event == E::key && !open_objects.empty() && repeated.empty()) {
      auto key = parsed.get<std::string>();
      auto& seen = open_objects.back();
      if (std::find(seen.begin(), seen.end(), key) != seen.end()) repeated = key;
      seen.push_back(std::move(key));
    }
    return true;
  };
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text, watch);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_spec, e.what());
  }
  if (!repeated.empty()) {
    bool numeric = std::all_of(repeated.begin(), repeated.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
    throw Error(numeric ? Errc::duplicate_slot : Errc::malformed_spec, "repeated key '" + repeated + "'");
  }
  if (!doc.is_object() || !doc.contains("crates") || !doc["crates"].is_array()) {
    throw Error(Errc::malformed_spec, "expected an object with a 'crates' array");
  }

  Topology topo;
  try {
    for (const auto& c : doc["crates"]) {
      SimCrate crate;
      crate.chassis = c.at("chassis").get<int>();
      if (crate.chassis < 0) throw Error(Errc::malformed_spec, "negative chassis id");
      crate.bus_kind = parse_bus_kind(c.value("bus_kind", std::string("host-pci")));
      if (topo.crate(crate.chassis)) {
        throw Error(Errc::duplicate_chassis, "chassis " + std::to_string(crate.chassis));
      }
      if (c.contains("slots")) {
        const auto& slots = c.at("slots");
        if (!slots.is_object()) throw Error(Errc::malformed_spec, "'slots' must be an object");
        for (const auto& [key, board] : slots.items()) {
          int slot = 0;
          std::size_t used = 0;
          try {
            slot = std::stoi(key, &used);
          } catch (const std::exception&) {
            used = 0;
          }
          if (used != key.size() || slot < 1) {
            throw Error(Errc::malformed_spec, "bad slot number '" + key + "'");
          }
          // nlohmann keeps the last of duplicate keys; catch "01" vs "1" style repeats here
          if (crate.slots.count(slot)) {
            throw Error(Errc::duplicate_slot,
                        std::to_string(crate.chassis) + "/" + std::to_string(slot));
          }
          auto type = board.at("board_type").get<std::string>();
          auto serial = board.value("serial", std::string{});
          crate.slots.emplace(slot, SimBoard(type, serial));
        }
      }
      topo.crates.push_back(std::move(crate));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_spec, e.what());
  }
  std::sort(topo.crates.begin(), topo.crates.end(),
            [](const SimCrate& a, const SimCrate& b) { return a.chassis < b.chassis; });
  return topo;
}

Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_topology(text.str());
}

HardwareSim::HardwareSim(Topology topology) : topology_(std::move(topology)) {
  topology_.generation = 0;
}

bool HardwareSim::occupied(int chassis, int slot) const noexcept {
  const auto* c = topology_.crate(chassis);
  return c && c->slots.count(slot) != 0;
}

const SimBoard& HardwareSim::board(int chassis, int slot) const {
  const auto* c = topology_.crate(chassis);
  if (!c) throw Error(Errc::unknown_chassis, std::to_string(chassis));
  auto it = c->slots.find(slot);
  if (it == c->slots.end()) {
    throw Error(Errc::empty_slot, std::to_string(chassis) + "/" + std::to_string(slot));
  }
  return it->second;
}

SimBoard& HardwareSim::board(int chassis, int slot) {
  return const_cast<SimBoard&>(std::as_const(*this).board(chassis, slot));
}

BusKind HardwareSim::bus_kind(int chassis) const {
  const auto* c = topology_.crate(chassis);
  if (!c) throw Error(Errc::unknown_chassis, std::to_string(chassis));
  return c->bus_kind;
}

std::uint32_t HardwareSim::read(int chassis, int slot, std::uint32_t offset) const {
  return board(chassis, slot).read(offset);
}

std::uint32_t HardwareSim::write(int chassis, int slot, std::uint32_t offset, std::uint64_t value) {
  return board(chassis, slot).write(offset, value);
}

std::vector<InterruptEvent> HardwareSim::advance_clock(Tick dt) {
  std::vector<InterruptEvent> events;
  if (dt == 0) return events;

  struct Pending {
    Tick at;
    int chassis;
    int slot;
  };
  std::vector<Pending> fires;
  std::vector<Tick> times;
  for (auto& crate : topology_.crates) {
    for (auto& [slot, b] : crate.slots) {
      times.clear();
      b.advance(now_, dt, &times);
      for (Tick t : times) fires.push_back({t, crate.chassis, slot});
    }
  }
  now_ += dt;

  // crates and slots are visited in order, so a stable sort by time keeps
  // (chassis, slot) order among simultaneous fires
  std::stable_sort(fires.begin(), fires.end(),
                   [](const Pending& a, const Pending& b) { return a.at < b.at; });
  events.reserve(fires.size());
  for (const auto& f : fires) events.push_back(next_event(f.chassis, f.slot, 0, f.at));
  return events;
}

InterruptEvent HardwareSim::inject_interrupt(int chassis, int slot, unsigned line) {
  const auto& b = board(chassis, slot);
  if (line >= b.irq_lines()) {
    throw Error(Errc::invalid_line, b.type() + " has " + std::to_string(b.irq_lines()) + " lines");
  }
  return next_event(chassis, slot, line, now_);
}

InterruptEvent HardwareSim::next_event(int chassis, int slot, unsigned line, Tick at) {
  auto& seq = irq_seq_[{chassis, slot, line}];
  return InterruptEvent{chassis, slot, line, ++seq, at};
}

std::uint64_t HardwareSim::remove_board(int chassis, int slot) {
  auto* c = topology_.crate(chassis);
  if (!c) throw Error(Errc::unknown_chassis, std::to_string(chassis));
  if (c->slots.erase(slot) == 0) {
    throw Error(Errc::empty_slot, std::to_string(chassis) + "/" + std::to_string(slot));
  }
  return ++topology_.generation;
}

std::uint64_t HardwareSim::insert_board(int chassis, int slot, SimBoard board) {
  auto* c = topology_.crate(chassis);
  if (!c) throw Error(Errc::unknown_chassis, std::to_string(chassis));
  if (slot < 1) throw Error(Errc::invalid_argument, "slot numbers start at 1");
  if (c->slots.count(slot)) {
    throw Error(Errc::occupied_slot, std::to_string(chassis) + "/" + std::to_string(slot));
  }
  board.refresh(now_);
  c->slots.emplace(slot, std::move(board));
  return ++topology_.generation;
}

}  // namespace deskctl::hw
