#include "deskctl/driver/builtin.hpp"

namespace deskctl::driver {

using hook::MicroOp;

namespace {

ChannelDecl single_read(std::uint32_t index, std::string name, std::uint32_t offset, std::uint8_t width,
                        ValueKind kind = ValueKind::unsigned_value) {
  ChannelDecl ch{index, std::move(name), kind, Cost::simple,
                 {MicroOp::read(offset, width), MicroOp::end()}, {}};
  ch.routine = [offset, width, kind](hook::RegisterPort& port) -> std::int64_t {
    const std::uint32_t raw = port.read(offset, width);
    if (kind == ValueKind::signed_value && width == 32) return static_cast<std::int32_t>(raw);
    if (kind == ValueKind::signed_value && width == 16) return static_cast<std::int16_t>(raw);
    return raw;
  };
  return ch;
}

ChannelDecl masked_bit(std::uint32_t index, std::string name, std::uint32_t offset, std::uint8_t width,
                       unsigned bit) {
  ChannelDecl ch{index,
                 std::move(name),
                 ValueKind::unsigned_value,
                 Cost::simple,
                 {MicroOp::read(offset, width), MicroOp::and_mask(1u << bit), MicroOp::shr(bit), MicroOp::end()},
                 {}};
  ch.routine = [offset, width, bit](hook::RegisterPort& port) -> std::int64_t {
    return (port.read(offset, width) >> bit) & 1u;
  };
  return ch;
}

}  // namespace

DriverDescriptor vct6_driver() {
  return {"vct6", "vct6",
          {single_read(0, "count0", hw::vct6::COUNT0, 32), single_read(1, "count1", hw::vct6::COUNT1, 32)},
          {"Read", "Preset"},
          {}};
}

DriverDescriptor adc8_driver() {
  DriverDescriptor d{"adc8", "adc8", {}, {"ReadChannel"}, {}};
  for (std::uint32_t k = 0; k < 8; ++k) {
    d.channels.push_back(single_read(k, "ch" + std::to_string(k), hw::adc8::CH0 + 4 * k, 16));
  }
  ChannelDecl averaged{8, "averaged", ValueKind::unsigned_value, Cost::complex, {}, {}};
  averaged.routine = [](hook::RegisterPort& port) -> std::int64_t {
    std::int64_t sum = 0;
    for (std::uint32_t k = 0; k < 8; ++k) sum += port.read(hw::adc8::CH0 + 4 * k, 16);
    return sum / 8;
  };
  d.channels.push_back(std::move(averaged));
  return d;
}

DriverDescriptor mot4_driver() {
  DriverDescriptor d{"mot4", "mot4", {}, {"Move", "Jog", "ReadPos", "Stop"}, {}};
  for (std::uint32_t n = 0; n < 4; ++n) {
    d.channels.push_back(single_read(n, "pos" + std::to_string(n), hw::mot4::POS0 + 4 * n, 32,
                                     ValueKind::signed_value));
  }
  for (std::uint32_t n = 0; n < 4; ++n) {
    d.channels.push_back(masked_bit(4 + n, "moving" + std::to_string(n), hw::mot4::CMD, 16, n));
  }
  return d;
}

DriverDescriptor dio16_driver() {
  DriverDescriptor d{"dio16", "dio16", {}, {"ReadIn", "ReadOut", "WriteOut"}, {}};
  for (unsigned k = 0; k < 16; ++k) {
    d.channels.push_back(masked_bit(k, "bit" + std::to_string(k), hw::dio16::IN, 16, k));
  }
  d.channels.push_back(single_read(16, "in", hw::dio16::IN, 16));
  d.channels.push_back(single_read(17, "out", hw::dio16::OUT, 16));
  return d;
}

std::vector<DriverDescriptor> builtin_drivers() {
  return {vct6_driver(), adc8_driver(), mot4_driver(), dio16_driver()};
}

DriverDescriptor fgen_driver() {
  return {"fgen", "dio16",
          {ChannelDecl{0,
                       "sample",
                       ValueKind::unsigned_value,
                       Cost::simple,
                       {MicroOp::write(hw::dio16::OUT, 16, 0), MicroOp::read(hw::dio16::OUT, 16), MicroOp::end()},
                       {}}},
          {},
          {}};
}

}  // namespace deskctl::driver
