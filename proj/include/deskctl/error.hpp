#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace deskctl {

/// Error codes shared by every layer. The kebab-case spelling returned by
/// to_string() is what travels on the wire and what the CLI prints.
enum class Errc {
  malformed_spec,
  duplicate_chassis,
  duplicate_slot,
  unknown_board_type,
  unknown_chassis,
  empty_slot,
  occupied_slot,
  unmapped_offset,
  read_only,
  value_too_wide,
  invalid_line,
  hook_armed,

  unknown_ref,
  binding_missing,
  binding_bound,
  stale_generation,

  duplicate_driver,
  unknown_driver,
  unknown_logical,
  type_mismatch,
  already_attached,
  complex_in_irq,

  duplicate_registration,
  unknown_channel,
  not_attached,
  malformed_program,
  zero_capacity,
  period_too_small,
  empty_channels,
  complex_needs_async,
  unknown_hook,
  needs_reset,

  unknown_device,
  unknown_command,
  bad_payload,
  hardware_error,
  unknown_event,
  unknown_subscription,
  bad_frame,
  bind_failed,
  connection_closed,
  overflow,

  invalid_key,
  unknown_key,
  invalid_name,
  bad_value,
  io_error,
  malformed_snapshot,

  missing_boards,
  invalid_argument,
};

std::string_view to_string(Errc code) noexcept;
/// Inverse of to_string.
std::optional<Errc> errc_from_string(std::string_view text) noexcept;

class Error : public std::runtime_error {
 public:
  explicit Error(Errc code, const std::string& detail = {});

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace deskctl
