#pragma once

#include <vector>

#include "deskctl/driver/driver_core.hpp"

namespace deskctl::driver {

// Drivers for the simulated board catalogue. Each is named after its board type.
//
//   vct6   ch0 count0, ch1 count1
//   adc8   ch0..ch7, ch8 averaged (complex: mean of the eight samples)
//   mot4   ch0..ch3 pos0..pos3 (signed), ch4..ch7 moving0..moving3
//   dio16  ch0..ch15 bit0..bit15, ch16 in, ch17 out
DriverDescriptor vct6_driver();
DriverDescriptor adc8_driver();
DriverDescriptor mot4_driver();
DriverDescriptor dio16_driver();

std::vector<DriverDescriptor> builtin_drivers();

/// Function-generator driver over a dio16 board: ch0 "sample" writes a
/// value to OUT and reads it back. The WRITE constant is a placeholder meant
/// to be replaced per record by a hook write feed.
DriverDescriptor fgen_driver();

}  // namespace deskctl::driver
