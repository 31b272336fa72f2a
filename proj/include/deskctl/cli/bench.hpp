#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "deskctl/hw/sim.hpp"

namespace deskctl::cli {

struct BenchOptions {
  hw::Tick period = 10;
  std::uint64_t events = 100;
  /// 0 selects the synchronous capture path.
  hw::Tick async_delay = 0;
  std::vector<std::uint32_t> waveform;  // empty: default_waveform()
  /// Wall-clock length of one tick; zero runs unpaced.
  std::chrono::microseconds tick{1000};
};

struct BenchReport {
  hw::Tick period = 0;
  std::uint64_t events = 0;
  std::uint64_t records = 0;
  std::uint64_t overruns = 0;
  double p50_us = 0;
  double p99_us = 0;
  double max_us = 0;
  double jitter_max_us = 0;
  /// Read-back column equals the first `records` waveform samples.
  bool output_matches = true;
};

/// 64 samples of a full 16-bit sine period.
std::vector<std::uint32_t> default_waveform();

/// Function-generator benchmark. A vct6 timer interrupt triggers a hook that
/// writes the next waveform sample to a dio16 OUT register and reads it back.
/// Throws Errc::missing_boards when the topology lacks either board.
BenchReport bench_function_generator(const hw::Topology& topology, const BenchOptions& options);

/// `key=value` lines: period, events, records, overruns, p50_us, p99_us,
/// max_us, jitter_max_us, output.
std::string render(const BenchReport& report);

}  // namespace deskctl::cli
