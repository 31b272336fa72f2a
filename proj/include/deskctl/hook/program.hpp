#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deskctl/hw/register_map.hpp"

namespace deskctl::hook {

enum class OpCode : std::uint8_t { read, write, and_mask, shift_right, end };

/// One read-program instruction.
///   READ(offset,width)           push register value
///   WRITE(offset,width,constant) store constant, stack untouched
///   AND(mask)                    top &= mask
///   SHR(n)                       top >>= n
///   END                          result is the stack top
struct MicroOp {
  OpCode code = OpCode::end;
  std::uint32_t offset = 0;
  std::uint8_t width = 0;
  std::uint32_t operand = 0;

  static constexpr MicroOp read(std::uint32_t offset, std::uint8_t width) {
    return {OpCode::read, offset, width, 0};
  }
  static constexpr MicroOp write(std::uint32_t offset, std::uint8_t width, std::uint32_t value) {
    return {OpCode::write, offset, width, value};
  }
  static constexpr MicroOp and_mask(std::uint32_t mask) { return {OpCode::and_mask, 0, 0, mask}; }
  static constexpr MicroOp shr(std::uint32_t n) { return {OpCode::shift_right, 0, 0, n}; }
  static constexpr MicroOp end() { return {OpCode::end, 0, 0, 0}; }

  friend bool operator==(const MicroOp&, const MicroOp&) = default;
};

using Program = std::vector<MicroOp>;

inline constexpr std::size_t max_program_length = 16;

std::string to_string(const MicroOp& op);
std::string to_string(const Program& program);  // "READ(0x00,16) AND(0x0008) SHR(3) END"

/// Structural checks: length, a single trailing END, stack depth exactly 1
/// at END and never underflowing. With a register map, every READ/WRITE
/// must name a mapped register of the same width. Throws Errc::malformed_program.
void validate(const Program& program, const hw::RegisterMap* registers = nullptr);

/// Register access seen by a running program.
class RegisterPort {
 public:
  virtual ~RegisterPort() = default;
  virtual std::uint32_t read(std::uint32_t offset, unsigned width) = 0;
  virtual void write(std::uint32_t offset, unsigned width, std::uint32_t value) = 0;
};

struct ProgramResult {
  std::uint32_t value = 0;
  unsigned width = 32;  // width of the READ that produced the top, for sign extension
};

/// Interprets a program. Stack faults are reported as Errc::malformed_program
/// even when validate() was skipped; register errors propagate unchanged.
ProgramResult run(const Program& program, RegisterPort& port);

/// Program with every WRITE constant replaced by `value`.
Program with_write_value(Program program, std::uint32_t value);

}  // namespace deskctl::hook
