#include "deskctl/error.hpp"

namespace deskctl {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::malformed_spec: return "malformed-spec";
    case Errc::duplicate_chassis: return "duplicate-chassis";
    case Errc::duplicate_slot: return "duplicate-slot";
    case Errc::unknown_board_type: return "unknown-board-type";
    case Errc::unknown_chassis: return "unknown-chassis";
    case Errc::empty_slot: return "empty-slot";
    case Errc::occupied_slot: return "occupied-slot";
    case Errc::unmapped_offset: return "unmapped-offset";
    case Errc::read_only: return "read-only";
    case Errc::value_too_wide: return "value-too-wide";
    case Errc::invalid_line: return "invalid-line";
    case Errc::hook_armed: return "hook-armed";
    case Errc::unknown_ref: return "unknown-ref";
    case Errc::binding_missing: return "binding-missing";
    case Errc::binding_bound: return "binding-bound";
    case Errc::stale_generation: return "stale-generation";
    case Errc::duplicate_driver: return "duplicate-driver";
    case Errc::unknown_driver: return "unknown-driver";
    case Errc::unknown_logical: return "unknown-logical";
    case Errc::type_mismatch: return "type-mismatch";
    case Errc::already_attached: return "already-attached";
    case Errc::complex_in_irq: return "complex-in-irq";
    case Errc::duplicate_registration: return "duplicate-registration";
    case Errc::unknown_channel: return "unknown-channel";
    case Errc::not_attached: return "not-attached";
    case Errc::malformed_program: return "malformed-program";
    case Errc::zero_capacity: return "zero-capacity";
    case Errc::period_too_small: return "period-too-small";
    case Errc::empty_channels: return "empty-channels";
    case Errc::complex_needs_async: return "complex-needs-async";
    case Errc::unknown_hook: return "unknown-hook";
    case Errc::needs_reset: return "needs-reset";
    case Errc::unknown_device: return "unknown-device";
    case Errc::unknown_command: return "unknown-command";
    case Errc::bad_payload: return "bad-payload";
    case Errc::hardware_error: return "hardware-error";
    case Errc::unknown_event: return "unknown-event";
    case Errc::unknown_subscription: return "unknown-subscription";
    case Errc::bad_frame: return "bad-frame";
    case Errc::bind_failed: return "bind-failed";
    case Errc::connection_closed: return "connection-closed";
    case Errc::overflow: return "overflow";
    case Errc::invalid_key: return "invalid-key";
    case Errc::unknown_key: return "unknown-key";
    case Errc::invalid_name: return "invalid-name";
    case Errc::bad_value: return "bad-value";
    case Errc::io_error: return "io-error";
    case Errc::malformed_snapshot: return "malformed-snapshot";
    case Errc::missing_boards: return "missing-boards";
    case Errc::invalid_argument: return "invalid-argument";
  }
  return "unknown-error";
}

std::optional<Errc> errc_from_string(std::string_view text) noexcept {
  for (int i = 0; i <= static_cast<int>(Errc::invalid_argument); ++i) {
    if (to_string(static_cast<Errc>(i)) == text) return static_cast<Errc>(i);
  }
  return std::nullopt;
}

namespace {

std::string compose(Errc code, const std::string& detail) {
  std::string what(to_string(code));
  if (!detail.empty()) {
    what += ": ";
    what += detail;
  }
  return what;
}

}  // namespace

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(compose(code, detail)), code_(code), detail_(detail) {}

}  // namespace deskctl
