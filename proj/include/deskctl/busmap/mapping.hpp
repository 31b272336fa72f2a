#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "deskctl/hw/sim.hpp"

namespace deskctl::db {
class PropertyDb;
}

namespace deskctl::busmap {

struct SlotAddress {
  int chassis = 0;
  int slot = 0;

  friend auto operator<=>(const SlotAddress&, const SlotAddress&) = default;
};

std::string to_string(const SlotAddress& at);  // "chassis/slot"

using PhysicalNumber = std::uint32_t;
using LogicalId = std::uint32_t;

/// Logical id 0 never names a board.
inline constexpr LogicalId unassigned_logical = 0;

struct EnumeratedBoard {
  PhysicalNumber physical = 0;
  SlotAddress at;
  std::string board_type;

  friend bool operator==(const EnumeratedBoard&, const EnumeratedBoard&) = default;
};

struct Enumeration {
  std::uint64_t generation = 0;
  std::vector<EnumeratedBoard> boards;
};

/// Chassis ascending, then slot ascending; physical numbers 0..N-1 in that order.
Enumeration enumerate(const hw::Topology& topology);

enum class BindingState { bound, missing };

struct LogicalBinding {
  LogicalId logical_id = unassigned_logical;
  std::string board_type;
  SlotAddress at;
  std::uint64_t last_seen_generation = 0;
  BindingState state = BindingState::bound;

  friend bool operator==(const LogicalBinding&, const LogicalBinding&) = default;
};

enum class Classification { none, trivial, non_trivial };
std::string_view to_string(Classification c) noexcept;

struct TypeConflict {
  SlotAddress at;
  std::string expected_type;
  std::string found_type;
  LogicalId previous_logical = unassigned_logical;
  LogicalId new_logical = unassigned_logical;
};

struct ChangeReport {
  Classification classification = Classification::none;
  std::vector<LogicalBinding> added;    // fresh ids and bindings that came back
  std::vector<LogicalBinding> missing;  // bound -> missing transitions
  std::vector<TypeConflict> type_conflicts;

  /// One line per anomaly, e.g. `MISSING logical=2 type=adc8 at=0/2`.
  std::vector<std::string> render() const;
};

using BoardRef = std::variant<LogicalId, SlotAddress>;

/// Stable logical numbering on top of shifting enumeration order.
///
/// Bindings are matched by (slot address, board type). A binding whose board
/// disappears is kept in state `missing` until forget() is called, so its
/// logical id can never be handed to another board.
class MappingTable {
 public:
  /// Reconciles against a fresh enumeration. Anomalies are reported, not thrown.
  ChangeReport reconcile(const Enumeration& enumeration);

  /// Physical number of the board behind `ref`. Refuses missing bindings and
  /// enumerations older than `current_generation`.
  PhysicalNumber resolve(const BoardRef& ref, std::uint64_t current_generation) const;

  const LogicalBinding& binding(LogicalId id) const;
  const std::map<LogicalId, LogicalBinding>& bindings() const noexcept { return bindings_; }
  LogicalId next_logical() const noexcept { return next_logical_; }

  bool reconciled() const noexcept { return reconciled_; }
  std::uint64_t reconciled_generation() const noexcept { return enumeration_.generation; }
  const Enumeration& last_enumeration() const noexcept { return enumeration_; }

  /// Drops a missing binding. Bound bindings cannot be forgotten.
  void forget(LogicalId id);

  /// Stored under `busmap/<chassis>/<slot>:<board_type>` = [logical, state, generation]
  /// plus `busmap:next_logical`.
  void save(db::PropertyDb& db) const;
  static MappingTable load(const db::PropertyDb& db);

  friend bool operator==(const MappingTable& a, const MappingTable& b) {
    return a.bindings_ == b.bindings_ && a.next_logical_ == b.next_logical_;
  }

 private:
  std::map<LogicalId, LogicalBinding> bindings_;
  LogicalId next_logical_ = 1;
  Enumeration enumeration_;
  bool reconciled_ = false;
};

}  // namespace deskctl::busmap
