#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "deskctl/hw/register_map.hpp"

namespace deskctl::hw {

/// Simulated time. One tick is one millisecond of model time.
using Tick = std::uint64_t;

enum class Behavior { counter, waveform_source, motor_integrator, static_regs };
enum class BusKind { host_pci, remote_vme, remote_cpci };

std::string_view to_string(BusKind kind) noexcept;
BusKind parse_bus_kind(std::string_view text);

/// Static description of a board type: register layout, interrupt lines and
/// the behaviour model that evolves its registers with the clock.
struct BoardModel {
  std::string type;
  RegisterMap registers;
  unsigned irq_lines = 0;
  Behavior behavior = Behavior::static_regs;
};

/// Throws Errc::unknown_board_type.
const BoardModel& board_model(std::string_view type);
bool is_known_board_type(std::string_view type) noexcept;
std::vector<std::string> known_board_types();

// vct6 counter/timer
namespace vct6 {
inline constexpr std::uint32_t COUNT0 = 0x00;
inline constexpr std::uint32_t COUNT1 = 0x04;
inline constexpr std::uint32_t PERIOD = 0x08;
inline constexpr std::uint32_t CTRL = 0x10;
inline constexpr std::uint32_t IRQACK = 0x14;
inline constexpr std::uint32_t CTRL_COUNT0 = 1u << 0;
inline constexpr std::uint32_t CTRL_COUNT1 = 1u << 1;
inline constexpr std::uint32_t CTRL_TIMER_IRQ = 1u << 2;
}  // namespace vct6

// adc8 waveform source
namespace adc8 {
inline constexpr std::uint32_t CH0 = 0x00;  // CHk at CH0 + 4k, read-only
inline constexpr std::uint32_t WMODE = 0x20;  // 2 bits per channel
inline constexpr std::uint32_t WPARAM0 = 0x40;  // WPARAMk at WPARAM0 + 4k
inline constexpr std::uint32_t MODE_CONST = 0;
inline constexpr std::uint32_t MODE_RAMP = 1;
inline constexpr std::uint32_t MODE_SINE = 2;
inline constexpr unsigned SINE_TABLE_LEN = 64;
std::uint16_t sample(std::uint32_t mode, std::uint32_t param, Tick now) noexcept;
}  // namespace adc8

// mot4 four-axis motor controller
namespace mot4 {
inline constexpr std::uint32_t POS0 = 0x00;     // POSn at POS0 + 4n, signed
inline constexpr std::uint32_t VEL0 = 0x10;     // VELn, signed step per tick
inline constexpr std::uint32_t TARGET0 = 0x20;  // TARGETn, signed
inline constexpr std::uint32_t CMD = 0x30;      // bit n: axis n moving
}  // namespace mot4

// dio16 digital i/o
namespace dio16 {
inline constexpr std::uint32_t IN = 0x00;
inline constexpr std::uint32_t OUT = 0x04;
}  // namespace dio16

class SimBoard {
 public:
  SimBoard(std::string type, std::string serial);

  const std::string& type() const noexcept { return model_->type; }
  const std::string& serial() const noexcept { return serial_; }
  const BoardModel& model() const noexcept { return *model_; }
  unsigned irq_lines() const noexcept { return model_->irq_lines; }

  std::uint32_t read(std::uint32_t offset) const;
  /// Bus write: rejects read-only registers and values wider than the register.
  std::uint32_t write(std::uint32_t offset, std::uint64_t value);

  std::uint32_t value_at(std::size_t index) const { return values_.at(index); }
  std::uint32_t value(std::string_view name) const;
  const std::vector<std::uint32_t>& values() const noexcept { return values_; }

  /// Evolves the registers from `from` to `from + dt` and appends the
  /// timestamps of periodic interrupts fired on line 0 in (from, from+dt].
  void advance(Tick from, Tick dt, std::vector<Tick>* line0_fires);

  /// Recomputes clock-derived registers (waveform samples) for time `now`.
  void refresh(Tick now);

 private:
  std::uint32_t& slot_of(std::uint32_t offset);
  void store(std::size_t index, std::uint64_t value);

  const BoardModel* model_;
  std::string serial_;
  std::vector<std::uint32_t> values_;
  Tick refreshed_at_ = 0;
};

struct SimCrate {
  int chassis = 0;
  BusKind bus_kind = BusKind::host_pci;
  std::map<int, SimBoard> slots;  // occupied slots only
};

struct Topology {
  std::vector<SimCrate> crates;  // ordered by chassis
  std::uint64_t generation = 0;

  const SimCrate* crate(int chassis) const noexcept;
  SimCrate* crate(int chassis) noexcept;
  std::size_t board_count() const noexcept;
};

struct InterruptEvent {
  int chassis = 0;
  int slot = 0;
  unsigned line = 0;
  std::uint64_t seq = 0;
  Tick timestamp = 0;

  friend bool operator==(const InterruptEvent&, const InterruptEvent&) = default;
};

/// Parses the JSON topology document:
/// {"crates":[{"chassis":0,"bus_kind":"host-pci","slots":{"1":{"board_type":"vct6","serial":"A"}}}]}
Topology parse_topology(std::string_view json_text);
Topology load_topology(const std::string& path);

/// Register-level simulation of a set of crates. Not internally
/// synchronised: one owner mutates it.
class HardwareSim {
 public:
  HardwareSim() = default;
  explicit HardwareSim(Topology topology);

  static HardwareSim build(std::string_view json_text) {
    return HardwareSim(parse_topology(json_text));
  }

  const Topology& topology() const noexcept { return topology_; }
  std::uint64_t generation() const noexcept { return topology_.generation; }
  Tick now() const noexcept { return now_; }

  const SimBoard& board(int chassis, int slot) const;
  SimBoard& board(int chassis, int slot);
  bool occupied(int chassis, int slot) const noexcept;
  BusKind bus_kind(int chassis) const;

  std::uint32_t read(int chassis, int slot, std::uint32_t offset) const;
  std::uint32_t write(int chassis, int slot, std::uint32_t offset, std::uint64_t value);

  std::vector<InterruptEvent> advance_clock(Tick dt);
  InterruptEvent inject_interrupt(int chassis, int slot, unsigned line);

  std::uint64_t remove_board(int chassis, int slot);
  std::uint64_t insert_board(int chassis, int slot, SimBoard board);

 private:
  InterruptEvent next_event(int chassis, int slot, unsigned line, Tick at);

  Topology topology_;
  Tick now_ = 0;
  std::map<std::tuple<int, int, unsigned>, std::uint64_t> irq_seq_;
};

}  // namespace deskctl::hw
