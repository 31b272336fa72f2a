#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "deskctl/busmap/mapping.hpp"
#include "deskctl/hook/program.hpp"
#include "deskctl/hw/sim.hpp"

namespace deskctl::driver {

enum class ValueKind { unsigned_value, signed_value };
enum class Cost { simple, complex };

std::string_view to_string(Cost cost) noexcept;

using ReadRoutine = std::function<std::int64_t(hook::RegisterPort&)>;

/// A channel a driver exports. Simple channels carry a read-program;
/// complex channels carry a routine. A simple channel may also carry a
/// routine: the direct C++ read the program must agree with.
struct ChannelDecl {
  std::uint32_t index = 0;
  std::string name;
  ValueKind kind = ValueKind::unsigned_value;
  Cost cost = Cost::simple;
  hook::Program program;
  ReadRoutine routine;
};

class IrqContext;

/// Bottom-half handler. Returns true when the event should be forwarded to
/// the hook engine as a trigger.
using InterruptHandler = std::function<bool(const hw::InterruptEvent&, IrqContext&)>;

struct DriverDescriptor {
  std::string name;
  std::string board_type;
  std::vector<ChannelDecl> channels;
  std::vector<std::string> commands;
  InterruptHandler on_interrupt;  // empty: forward every event
};

struct IoWindow {
  int chassis = 0;
  int slot = 0;
  std::uint64_t base = 0;  // host bus address of register offset 0
};

struct BoardHandle {
  std::string driver;
  busmap::LogicalId logical_id = busmap::unassigned_logical;
  IoWindow io_window;
  std::vector<unsigned> irq_lines;
};

/// Receives channel declarations at driver registration (the hook engine).
class ChannelRegistry {
 public:
  virtual ~ChannelRegistry() = default;
  virtual void register_channel(const std::string& driver, std::span<const ChannelDecl> channels) = 0;
};

/// Receives interrupts that a driver handler forwarded as triggers.
class TriggerSink {
 public:
  virtual ~TriggerSink() = default;
  virtual void on_interrupt(const hw::InterruptEvent& event) = 0;
};

/// Register access through a board's host-side bus window.
class BoardPort final : public hook::RegisterPort {
 public:
  BoardPort(const class DriverCore& core, hw::HardwareSim& sim, IoWindow window)
      : core_(&core), sim_(&sim), window_(window) {}

  std::uint32_t read(std::uint32_t offset, unsigned width) override;
  void write(std::uint32_t offset, unsigned width, std::uint32_t value) override;

 private:
  const DriverCore* core_;
  hw::HardwareSim* sim_;
  IoWindow window_;
};

/// Interface layer between boards and the layers above: driver registry,
/// board attachment with bus-window and IRQ routing, interrupt dispatch and
/// the textual state export.
class DriverCore {
 public:
  explicit DriverCore(hw::HardwareSim& sim) : sim_(&sim) {}

  DriverCore(const DriverCore&) = delete;
  DriverCore& operator=(const DriverCore&) = delete;

  void set_channel_registry(ChannelRegistry* registry) noexcept { registry_ = registry; }
  void set_trigger_sink(TriggerSink* sink) noexcept { sink_ = sink; }

  void register_driver(DriverDescriptor descriptor);
  bool has_driver(const std::string& name) const;
  const DriverDescriptor& driver(const std::string& name) const;
  const ChannelDecl& channel(const std::string& driver, std::uint32_t index) const;

  /// Attaches a registered driver to the board behind `logical`. `irq_lines`
  /// defaults to every line of the board.
  BoardHandle attach(const std::string& driver_name, busmap::LogicalId logical,
                     const busmap::MappingTable& table,
                     std::optional<std::vector<unsigned>> irq_lines = std::nullopt);
  void detach(const std::string& driver_name, busmap::LogicalId logical);
  /// Detaches every handle whose board is no longer bound in `table`.
  std::vector<BoardHandle> detach_unbound(const busmap::MappingTable& table);

  std::optional<BoardHandle> handle(const std::string& driver_name, busmap::LogicalId logical) const;
  std::vector<BoardHandle> handles() const;

  BoardPort port(const BoardHandle& handle) { return BoardPort(*this, *sim_, handle.io_window); }

  /// Host address -> (chassis, slot, offset); throws Errc::unmapped_offset.
  std::tuple<int, int, std::uint32_t> decode(std::uint64_t host_address) const;

  /// Reads a channel through its program (simple) or routine (complex) and
  /// remembers the value for export_state().
  std::int64_t read_channel(const BoardHandle& handle, std::uint32_t index);
  void note_value(const std::string& driver, busmap::LogicalId logical, std::uint32_t index,
                  std::int64_t value);

  /// Rendered state tree rooted at /drivers.
  std::string export_state() const;

  /// Runs the owning driver's handler; unrouted events are dropped and counted.
  void dispatch_interrupt(const hw::InterruptEvent& event);

  std::uint64_t handled_interrupts() const;
  std::uint64_t dropped_interrupts() const;

 private:
  using HandleKey = std::pair<std::string, busmap::LogicalId>;
  using LineKey = std::tuple<int, int, unsigned>;

  hw::HardwareSim* sim_;
  ChannelRegistry* registry_ = nullptr;
  TriggerSink* sink_ = nullptr;

  mutable std::mutex mutex_;
  std::map<std::string, DriverDescriptor> drivers_;
  std::map<HandleKey, BoardHandle> handles_;
  std::map<HandleKey, std::vector<std::optional<std::int64_t>>> last_values_;
  std::map<LineKey, HandleKey> routes_;
  std::map<std::uint64_t, IoWindow> windows_;  // by base address
  std::uint64_t handled_ = 0;
  std::uint64_t dropped_ = 0;

  friend class IrqContext;
};

/// What a bottom-half handler may do: read simple channels of its own board.
class IrqContext {
 public:
  IrqContext(DriverCore& core, const BoardHandle& handle) : core_(&core), handle_(&handle) {}

  const BoardHandle& handle() const noexcept { return *handle_; }
  /// Throws Errc::complex_in_irq for complex channels.
  std::int64_t read(std::uint32_t channel);
  /// Runs a program against the board, e.g. a trigger acknowledge.
  std::uint32_t run(const hook::Program& program);

 private:
  DriverCore* core_;
  const BoardHandle* handle_;
};

std::int64_t to_channel_value(const hook::ProgramResult& result, ValueKind kind) noexcept;

}  // namespace deskctl::driver
