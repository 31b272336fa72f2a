#include "deskctl/hook/program.hpp"

#include <cstdio>

#include "deskctl/error.hpp"

namespace deskctl::hook {

namespace {

std::string hex(std::uint32_t v, int digits) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%0*X", digits, v);
  return buf;
}

[[noreturn]] void malformed(const std::string& why) { throw Error(Errc::malformed_program, why); }

}  // namespace

std::string to_string(const MicroOp& op) {
  switch (op.code) {
    case OpCode::read:
      return "READ(" + hex(op.offset, 2) + "," + std::to_string(op.width) + ")";
    case OpCode::write:
      return "WRITE(" + hex(op.offset, 2) + "," + std::to_string(op.width) + "," +
             std::to_string(op.operand) + ")";
    case OpCode::and_mask:
      return "AND(" + hex(op.operand, 4) + ")";
    case OpCode::shift_right:
      return "SHR(" + std::to_string(op.operand) + ")";
    case OpCode::end:
      return "END";
  }
  return "?";
}

std::string to_string(const Program& program) {
  std::string out;
  for (const auto& op : program) {
    if (!out.empty()) out += ' ';
    out += to_string(op);
  }
  return out;
}

void validate(const Program& program, const hw::RegisterMap* registers) {
  if (program.empty()) malformed("empty program");
  if (program.size() > max_program_length) malformed("more than 16 instructions");
  int depth = 0;
  for (std::size_t i = 0; i < program.size(); ++i) {
    const auto& op = program[i];
    const bool last = i + 1 == program.size();
    switch (op.code) {
      case OpCode::read:
      case OpCode::write: {
        if (op.width != 8 && op.width != 16 && op.width != 32) malformed("bad width at " + std::to_string(i));
        if (registers) {
          int idx = registers->index_of(op.offset);
          if (idx < 0 || registers->at(static_cast<std::size_t>(idx)).width != op.width) {
            malformed(to_string(op) + " does not match the register map");
          }
        }
        if (op.code == OpCode::write && op.operand >= hw::width_limit(op.width)) {
          malformed(to_string(op) + " constant exceeds width");
        }
        if (op.code == OpCode::read) ++depth;
        break;
      }
      case OpCode::and_mask:
      case OpCode::shift_right:
        if (depth < 1) malformed("stack underflow at " + std::to_string(i));
        if (op.code == OpCode::shift_right && op.operand >= 32) malformed("shift out of range");
        break;
      case OpCode::end:
        if (!last) malformed("END before the last instruction");
        if (depth != 1) malformed("stack depth " + std::to_string(depth) + " at END");
        return;
    }
  }
  malformed("missing END");
}

ProgramResult run(const Program& program, RegisterPort& port) {
  if (program.size() > max_program_length) malformed("more than 16 instructions");
  std::uint32_t stack[max_program_length];
  unsigned widths[max_program_length];
  std::size_t depth = 0;
  for (const auto& op : program) {
    switch (op.code) {
      case OpCode::read:
        widths[depth] = op.width;
        stack[depth++] = port.read(op.offset, op.width);
        break;
      case OpCode::write:
        port.write(op.offset, op.width, op.operand);
        break;
      case OpCode::and_mask:
        if (depth == 0) malformed("stack underflow");
        stack[depth - 1] &= op.operand;
        break;
      case OpCode::shift_right:
        if (depth == 0) malformed("stack underflow");
        if (op.operand >= 32) malformed("shift out of range");
        stack[depth - 1] >>= op.operand;
        break;
      case OpCode::end:
        if (depth != 1) malformed("stack depth " + std::to_string(depth) + " at END");
        return {stack[0], widths[0]};
    }
  }
  malformed("missing END");
}

Program with_write_value(Program program, std::uint32_t value) {
  for (auto& op : program) {
    if (op.code == OpCode::write) op.operand = value;
  }
  return program;
}

}  // namespace deskctl::hook
