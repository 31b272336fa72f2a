#include "deskctl/busmap/mapping.hpp"

#include <algorithm>
#include <set>

#include "deskctl/db/property_db.hpp"
#include "deskctl/error.hpp"

namespace deskctl::busmap {

std::string to_string(const SlotAddress& at) {
  return std::to_string(at.chassis) + "/" + std::to_string(at.slot);
}

std::string_view to_string(Classification c) noexcept {
  switch (c) {
    case Classification::none: return "none";
    case Classification::trivial: return "trivial";
    case Classification::non_trivial: return "non-trivial";
  }
  return "none";
}

Enumeration enumerate(const hw::Topology& topology) {
  std::vector<const hw::SimCrate*> crates;
  for (const auto& c : topology.crates) crates.push_back(&c);
  std::sort(crates.begin(), crates.end(),
            [](const hw::SimCrate* a, const hw::SimCrate* b) { return a->chassis < b->chassis; });

  Enumeration out;
  out.generation = topology.generation;
  PhysicalNumber next = 0;
  for (const auto* crate : crates) {
    for (const auto& [slot, board] : crate->slots) {  // std::map: slot ascending
      out.boards.push_back({next++, {crate->chassis, slot}, board.type()});
    }
  }
  return out;
}

std::vector<std::string> ChangeReport::render() const {
  std::vector<std::string> lines;
  for (const auto& b : missing) {
    lines.push_back("MISSING logical=" + std::to_string(b.logical_id) + " type=" + b.board_type +
                    " at=" + to_string(b.at));
  }
  for (const auto& c : type_conflicts) {
    lines.push_back("CONFLICT logical=" + std::to_string(c.previous_logical) + " type=" +
                    c.expected_type + " found=" + c.found_type + " new=" +
                    std::to_string(c.new_logical) + " at=" + to_string(c.at));
  }
  for (const auto& b : added) {
    lines.push_back("ADDED logical=" + std::to_string(b.logical_id) + " type=" + b.board_type +
                    " at=" + to_string(b.at));
  }
  return lines;
}

ChangeReport MappingTable::reconcile(const Enumeration& enumeration) {
  ChangeReport report;
  std::set<LogicalId> matched;
  std::set<LogicalId> conflicted;

  for (const auto& board : enumeration.boards) {
    LogicalBinding* hit = nullptr;
    for (auto& [id, b] : bindings_) {
      if (b.at == board.at && b.board_type == board.board_type) {
        hit = &b;
        break;
      }
    }
    if (hit) {
      if (hit->state == BindingState::missing) {
        hit->state = BindingState::bound;
        report.added.push_back(*hit);
      }
      hit->last_seen_generation = enumeration.generation;
      matched.insert(hit->logical_id);
      continue;
    }

    LogicalBinding fresh{next_logical_++, board.board_type, board.at, enumeration.generation,
                         BindingState::bound};
    const LogicalBinding* displaced = nullptr;
    for (const auto& [id, b] : bindings_) {
      if (b.at == board.at && b.state == BindingState::bound) {
        displaced = &b;
        break;
      }
    }
    if (displaced) {
      report.type_conflicts.push_back(
          {board.at, displaced->board_type, board.board_type, displaced->logical_id, fresh.logical_id});
      conflicted.insert(displaced->logical_id);
    } else {
      report.added.push_back(fresh);
    }
    matched.insert(fresh.logical_id);
    bindings_.emplace(fresh.logical_id, std::move(fresh));
  }

  for (auto& [id, b] : bindings_) {
    if (matched.count(id) || b.state == BindingState::missing) continue;
    b.state = BindingState::missing;
    if (!conflicted.count(id)) report.missing.push_back(b);
  }

  if (!report.missing.empty() || !report.type_conflicts.empty()) {
    report.classification = Classification::non_trivial;
  } else if (!report.added.empty()) {
    report.classification = Classification::trivial;
  }

  enumeration_ = enumeration;
  reconciled_ = true;
  return report;
}

const LogicalBinding& MappingTable::binding(LogicalId id) const {
  auto it = bindings_.find(id);
  if (it == bindings_.end()) throw Error(Errc::unknown_ref, "logical " + std::to_string(id));
  return it->second;
}

PhysicalNumber MappingTable::resolve(const BoardRef& ref, std::uint64_t current_generation) const {
  if (!reconciled_ || enumeration_.generation != current_generation) {
    throw Error(Errc::stale_generation, "reconcile required");
  }
  const LogicalBinding* b = nullptr;
  if (const auto* id = std::get_if<LogicalId>(&ref)) {
    b = &binding(*id);
  } else {
    const auto& at = std::get<SlotAddress>(ref);
    for (const auto& [id, candidate] : bindings_) {
      if (candidate.at != at) continue;
      // prefer the bound binding when a slot has history
      if (!b || candidate.state == BindingState::bound) b = &candidate;
    }
    if (!b) throw Error(Errc::unknown_ref, "slot " + to_string(at));
  }
  if (b->state == BindingState::missing) {
    throw Error(Errc::binding_missing, "logical " + std::to_string(b->logical_id));
  }
  for (const auto& e : enumeration_.boards) {
    if (e.at == b->at && e.board_type == b->board_type) return e.physical;
  }
  // a bound binding always appears in the enumeration it was reconciled against
  throw Error(Errc::binding_missing, "logical " + std::to_string(b->logical_id));
}

void MappingTable::forget(LogicalId id) {
  const auto& b = binding(id);
  if (b.state == BindingState::bound) throw Error(Errc::binding_bound, "logical " + std::to_string(id));
  bindings_.erase(id);
}

void MappingTable::save(db::PropertyDb& db) const {
  for (const auto& key : db.keys_with_prefix("busmap/")) db.remove(key);
  for (const auto& [id, b] : bindings_) {
    db.put("busmap/" + to_string(b.at) + ":" + b.board_type,
           {std::to_string(id), b.state == BindingState::bound ? "bound" : "missing",
            std::to_string(b.last_seen_generation)});
  }
  db.put("busmap:next_logical", {std::to_string(next_logical_)});
}

namespace {

std::uint64_t parse_number(const std::string& text, const std::string& key) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw Error(Errc::bad_value, key);
  return v;
}

}  // namespace

MappingTable MappingTable::load(const db::PropertyDb& db) {
  MappingTable table;
  for (const auto& key : db.keys_with_prefix("busmap/")) {
    // busmap/<chassis>/<slot>:<type>
    auto colon = key.find(':');
    auto slash = key.find('/', 7);
    if (colon == std::string::npos || slash == std::string::npos || slash > colon) {
      throw Error(Errc::bad_value, key);
    }
    auto value = db.get(key).value_or(db::PropertyValue{});
    if (value.size() != 3) throw Error(Errc::bad_value, key);
    LogicalBinding b;
    b.at.chassis = static_cast<int>(parse_number(key.substr(7, slash - 7), key));
    b.at.slot = static_cast<int>(parse_number(key.substr(slash + 1, colon - slash - 1), key));
    b.board_type = key.substr(colon + 1);
    b.logical_id = static_cast<LogicalId>(parse_number(value[0], key));
    if (value[1] != "bound" && value[1] != "missing") throw Error(Errc::bad_value, key);
    b.state = value[1] == "bound" ? BindingState::bound : BindingState::missing;
    b.last_seen_generation = parse_number(value[2], key);
    if (b.logical_id == unassigned_logical || table.bindings_.count(b.logical_id)) {
      throw Error(Errc::bad_value, key);
    }
    table.bindings_.emplace(b.logical_id, b);
  }
  LogicalId next = 1;
  for (const auto& [id, b] : table.bindings_) next = std::max(next, id + 1);
  if (auto stored = db.get("busmap:next_logical"); stored && stored->size() == 1) {
    next = std::max<LogicalId>(next, static_cast<LogicalId>(parse_number((*stored)[0], "busmap:next_logical")));
  }
  table.next_logical_ = next;
  return table;
}

}  // namespace deskctl::busmap
