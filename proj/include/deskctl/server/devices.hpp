#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "deskctl/db/property_db.hpp"
#include "deskctl/server/frame.hpp"
#include "deskctl/station/station.hpp"

namespace deskctl::server {

enum class ArgKind { none, integer, integer_list, string };

std::string_view to_string(ArgKind kind) noexcept;

struct CommandDescriptor {
  std::string name;
  ArgKind input = ArgKind::none;
  ArgKind output = ArgKind::none;
};

/// Per-subscription view of one event stream of a device.
class EventSource {
 public:
  virtual ~EventSource() = default;
  /// Current value; also the baseline for changes().
  virtual json initial() = 0;
  /// Source events since the previous call, oldest first.
  virtual std::vector<json> changes() = 0;
};

/// A named, network-addressable object with commands and events.
///
/// Every device implements State and Status. Methods are called with the
/// station lock held.
class Device {
 public:
  explicit Device(std::string name);
  virtual ~Device() = default;

  const std::string& name() const noexcept { return name_; }
  virtual std::string device_class() const = 0;
  const std::vector<CommandDescriptor>& commands() const noexcept { return commands_; }

  /// Checks the payload against the command's input kind, runs it and checks
  /// the result. Throws unknown-command, bad-payload or the command's error.
  json execute(const std::string& command, const json& payload);

  virtual std::vector<std::string> events() const;
  /// Throws Errc::unknown_event.
  virtual std::unique_ptr<EventSource> open_event(const std::string& event);

 protected:
  using Handler = std::function<json(const json&)>;
  void add_command(std::string name, ArgKind input, ArgKind output, Handler handler);

  virtual std::string state() = 0;
  virtual std::string status() = 0;
  /// Errors from the layers below are wrapped here; the default passes them through.
  virtual Error translate(const Error& error) const { return error; }

 private:
  std::string name_;
  std::vector<CommandDescriptor> commands_;
  std::map<std::string, Handler> handlers_;
};

/// Event source that samples a value and reports it whenever it differs
/// from the last one reported. A failing sampler reads as null.
class SampledSource final : public EventSource {
 public:
  explicit SampledSource(std::function<json()> sampler) : sampler_(std::move(sampler)) {}
  json initial() override;
  std::vector<json> changes() override;

 private:
  json sample();
  std::function<json()> sampler_;
  json last_;
};

/// A device backed by one board through its builtin driver. Bound to the
/// board's logical id, so it keeps working when the board moves.
class BoardDevice : public Device {
 public:
  BoardDevice(std::string name, station::Station& station, std::string driver, busmap::LogicalId logical);

  const std::string& driver() const noexcept { return driver_; }
  busmap::LogicalId logical() const noexcept { return logical_; }

  std::vector<std::string> events() const override;
  std::unique_ptr<EventSource> open_event(const std::string& event) override;

 protected:
  std::string state() override;
  std::string status() override;
  Error translate(const Error& error) const override;

  driver::BoardHandle handle() const;
  std::uint32_t read_reg(std::uint32_t offset) const;
  void write_reg(std::uint32_t offset, std::uint64_t value);
  std::int64_t read_channel(std::uint32_t index);
  std::uint32_t channel_index(const std::string& channel_name) const;

  station::Station& station_;

 private:
  std::string driver_;
  busmap::LogicalId logical_;
};

class CounterDevice final : public BoardDevice {
 public:
  CounterDevice(std::string name, station::Station& station, busmap::LogicalId logical);
  std::string device_class() const override { return "counter"; }
};

class AdcDevice final : public BoardDevice {
 public:
  AdcDevice(std::string name, station::Station& station, busmap::LogicalId logical);
  std::string device_class() const override { return "adc"; }
};

class MotorDevice final : public BoardDevice {
 public:
  MotorDevice(std::string name, station::Station& station, db::PropertyDb& db, busmap::LogicalId logical);
  std::string device_class() const override { return "motor"; }

  static constexpr std::int64_t default_velocity = 10;

 protected:
  std::string state() override;

 private:
  db::PropertyDb& db_;
};

class DioDevice final : public BoardDevice {
 public:
  DioDevice(std::string name, station::Station& station, busmap::LogicalId logical);
  std::string device_class() const override { return "dio"; }
};

class DeviceSet;

/// `sys/hook/engine`: configures and drives hooks; event `hook:<id>`
/// streams records.
class HookDevice final : public Device {
 public:
  HookDevice(station::Station& station, const DeviceSet& devices);
  std::string device_class() const override { return "hook-engine"; }

  std::vector<std::string> events() const override;
  std::unique_ptr<EventSource> open_event(const std::string& event) override;

  /// Hook spec document (JSON text) -> engine config. Channels and interrupt
  /// sources are named by device.
  hook::HookConfig parse_config(const std::string& text) const;

 protected:
  std::string state() override { return "ON"; }
  std::string status() override;

 private:
  hook::HookId hook_id(const json& payload) const;

  station::Station& station_;
  const DeviceSet& devices_;
};

/// `sys/sim/clock`: simulated time.
class ClockDevice final : public Device {
 public:
  explicit ClockDevice(station::Station& station);
  std::string device_class() const override { return "clock"; }

  std::vector<std::string> events() const override;
  std::unique_ptr<EventSource> open_event(const std::string& event) override;

 protected:
  std::string state() override { return "ON"; }
  std::string status() override;

 private:
  station::Station& station_;
};

json record_to_json(const hook::Record& record);
std::string render_status(const hook::HookStatus& status);

class DeviceSet {
 public:
  void add(std::unique_ptr<Device> device);
  Device* find(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return devices_.size(); }

 private:
  std::map<std::string, std::unique_ptr<Device>> devices_;
};

/// One device per binding with a builtin driver, named `sim/<class>/<n>`
/// where n counts bindings of that board type in logical-id order, plus
/// sys/hook/engine and sys/sim/clock.
void populate(DeviceSet& set, station::Station& station, db::PropertyDb& db);

/// Writes a registry entry for every device.
void register_all(const DeviceSet& set, db::PropertyDb& db, const std::string& host, std::uint16_t port,
                  const std::string& server_name);

}  // namespace deskctl::server
