#include "deskctl/cli/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "deskctl/driver/builtin.hpp"
#include "deskctl/error.hpp"
#include "deskctl/station/station.hpp"

namespace deskctl::cli {

namespace {

using Micros = std::chrono::duration<double, std::micro>;

struct Sample {
  hw::Tick timestamp;
  double latency_us;
  hook::WallClock::time_point committed;
};

double percentile(std::vector<double> sorted, double p) {
  if (sorted.empty()) return 0;
  std::sort(sorted.begin(), sorted.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

const busmap::EnumeratedBoard* find_board(const busmap::Enumeration& e, const std::string& type) {
  for (const auto& b : e.boards) {
    if (b.board_type == type) return &b;
  }
  return nullptr;
}

}  // namespace

std::vector<std::uint32_t> default_waveform() {
  std::vector<std::uint32_t> out;
  for (int k = 0; k < 64; ++k) {
    out.push_back(static_cast<std::uint32_t>(std::lround(32767.5 + 32767.5 * std::sin(2 * std::numbers::pi * k / 64))));
  }
  return out;
}

BenchReport bench_function_generator(const hw::Topology& topology, const BenchOptions& options) {
  station::Station st(topology);
  st.register_builtin_drivers();
  st.drivers().register_driver(driver::fgen_driver());
  st.reconcile();
  st.attach_builtin();

  const auto& boards = st.table().last_enumeration();
  const auto* timer = find_board(boards, "vct6");
  const auto* output = find_board(boards, "dio16");
  if (!timer || !output) throw Error(Errc::missing_boards, "bench needs a vct6 and a dio16 board");
  st.drivers().attach("fgen", st.logical_at(output->at.chassis, output->at.slot), st.table(),
                      std::vector<unsigned>{});

  BenchReport report;
  report.period = options.period;
  if (options.events == 0) return report;

  const auto waveform = options.waveform.empty() ? default_waveform() : options.waveform;
  hook::HookConfig config;
  config.channels = {{"fgen", st.logical_at(output->at.chassis, output->at.slot), 0}};
  config.trigger = hook::InterruptTrigger{timer->at.chassis, timer->at.slot, 0};
  config.capacity = options.events;
  config.async_write = options.async_delay > 0;
  config.capture_delay = options.async_delay;
  config.write_feeds = {{0, waveform}};

  std::vector<Sample> samples;
  samples.reserve(options.events);
  st.hooks().set_capture_observer([&](const hook::Record& r, const hook::CaptureTiming& t) {
    samples.push_back({r.timestamp, Micros(t.committed - t.triggered).count(), t.committed});
  });

  auto id = st.hooks().configure(config);
  st.sim().write(timer->at.chassis, timer->at.slot, hw::vct6::PERIOD, options.period);
  st.sim().write(timer->at.chassis, timer->at.slot, hw::vct6::CTRL,
                 st.sim().read(timer->at.chassis, timer->at.slot, hw::vct6::CTRL) | hw::vct6::CTRL_TIMER_IRQ);
  st.hooks().arm(id);

  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t i = 1; i <= options.events; ++i) {
    if (options.tick.count() > 0) {
      std::this_thread::sleep_until(start + options.tick * static_cast<std::int64_t>(i * options.period));
    }
    st.advance(options.period);
  }
  st.hooks().disarm(id);
  st.advance(options.async_delay + 1);
  st.hooks().set_capture_observer(nullptr);

  auto status = st.hooks().status(id);
  report.events = status.events_seen;
  report.records = status.records_total;
  report.overruns = status.overruns;

  std::vector<double> latencies;
  for (const auto& s : samples) latencies.push_back(s.latency_us);
  report.p50_us = percentile(latencies, 0.50);
  report.p99_us = percentile(latencies, 0.99);
  report.max_us = percentile(latencies, 1.0);

  for (std::size_t k = 1; k < samples.size(); ++k) {
    const double nominal = Micros(options.tick).count() * static_cast<double>(samples[k].timestamp - samples[k - 1].timestamp);
    const double spacing = Micros(samples[k].committed - samples[k - 1].committed).count();
    report.jitter_max_us = std::max(report.jitter_max_us, std::abs(spacing - nominal));
  }

  auto stored = st.hooks().read_records(id, 0).records;
  report.output_matches = stored.size() == report.records;
  for (std::size_t k = 0; k < stored.size() && report.output_matches; ++k) {
    report.output_matches = stored[k].values.at(0) == static_cast<std::int64_t>(waveform[k % waveform.size()]);
  }
  return report;
}

std::string render(const BenchReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "period=" << r.period << '\n'
      << "events=" << r.events << '\n'
      << "records=" << r.records << '\n'
      << "overruns=" << r.overruns << '\n'
      << "p50_us=" << r.p50_us << '\n'
      << "p99_us=" << r.p99_us << '\n'
      << "max_us=" << r.max_us << '\n'
      << "jitter_max_us=" << r.jitter_max_us << '\n'
      << "output=" << (r.output_matches ? "match" : "mismatch") << '\n';
  return out.str();
}

}  // namespace deskctl::cli
