#include <doctest.h>

#include <algorithm>
#include <random>

#include "support.hpp"

using namespace deskctl;
using deskctl::test::error_of;

namespace {

const char* kTwoInOneSlot = R"({"crates":[{"chassis":0,"bus_kind":"host-pci","slots":{
  "1":{"board_type":"vct6","serial":"a"},"1":{"board_type":"adc8","serial":"b"}}}]})";

// Tick-by-tick reference model of the vct6 timer line: an interrupt at every
// tick t with t % period == 0.
std::vector<hw::Tick> brute_force_timer(hw::Tick start, hw::Tick dt, hw::Tick period) {
  std::vector<hw::Tick> fires;
  for (hw::Tick t = start + 1; t <= start + dt; ++t) {
    if (t % period == 0) fires.push_back(t);
  }
  return fires;
}

// Tick-by-tick reference model of one motor axis.
struct AxisModel {
  std::int32_t pos, vel, target;
  bool moving;
  void step() {
    if (!moving || vel == 0) return;
    if (pos == target) {
      moving = false;
      return;
    }
    std::int64_t next = static_cast<std::int64_t>(pos) + vel;
    bool toward = (target > pos && vel > 0) || (target < pos && vel < 0);
    if (toward && ((vel > 0 && next >= target) || (vel < 0 && next <= target))) {
      pos = target;
      moving = false;
      return;
    }
    pos = static_cast<std::int32_t>(static_cast<std::uint32_t>(next));
  }
};

std::uint32_t u32(std::int32_t v) { return static_cast<std::uint32_t>(v); }

}  // namespace

TEST_CASE("build_topology from the desk fixture") {
  auto topo = test::desk1();
  CHECK(topo.crates.size() == 2);
  CHECK(topo.board_count() == 4);
  CHECK(topo.generation == 0);
  CHECK(topo.crates[1].bus_kind == hw::BusKind::remote_vme);
  hw::HardwareSim sim(topo);
  CHECK(sim.board(0, 1).type() == "vct6");
  CHECK(sim.board(1, 5).type() == "dio16");
  CHECK(sim.read(0, 1, hw::vct6::CTRL) == 0x3);  // reset value
}

TEST_CASE("build_topology edge cases") {
  CHECK(hw::parse_topology(R"({"crates":[]})").crates.empty());
  CHECK(error_of([] { hw::parse_topology(kTwoInOneSlot); }) == Errc::duplicate_slot);
  CHECK(error_of([] {
          hw::parse_topology(R"({"crates":[{"chassis":0,"slots":{"1":{"board_type":"xyz"}}}]})");
        }) == Errc::unknown_board_type);
  CHECK(error_of([] { hw::parse_topology(R"({"crates":[{"chassis":0},{"chassis":0}]})"); }) ==
        Errc::duplicate_chassis);
  CHECK(error_of([] { hw::parse_topology("{not json"); }) == Errc::malformed_spec);
  CHECK(error_of([] { hw::parse_topology(R"({"crates":[{"chassis":0,"slots":{"0":{"board_type":"vct6"}}}]})"); }) ==
        Errc::malformed_spec);
}

TEST_CASE("build_topology is deterministic") {
  hw::HardwareSim a(test::desk1()), b(test::desk1());
  for (const auto& c : a.topology().crates) {
    for (const auto& [slot, board] : c.slots) {
      CHECK(board.values() == b.board(c.chassis, slot).values());
    }
  }
}

TEST_CASE("reg_access") {
  hw::HardwareSim sim(test::desk1());
  CHECK(sim.write(0, 1, hw::vct6::CTRL, 5) == 5);
  CHECK(sim.read(0, 1, hw::vct6::CTRL) == 5);
  CHECK(sim.read(0, 1, hw::vct6::COUNT0) == 0);
  CHECK(error_of([&] { sim.write(0, 2, hw::adc8::CH0, 1); }) == Errc::read_only);
  CHECK(error_of([&] { sim.read(0, 3, 0); }) == Errc::empty_slot);
  CHECK(error_of([&] { sim.read(0, 1, 0x02); }) == Errc::unmapped_offset);
  CHECK(error_of([&] { sim.write(1, 5, hw::dio16::OUT, 0x10000); }) == Errc::value_too_wide);
  CHECK(sim.write(1, 5, hw::dio16::OUT, 0xFFFF) == 0xFFFF);
}

TEST_CASE("advance_clock") {
  hw::HardwareSim sim(test::desk1());
  SUBCASE("counter increments by dt") {
    CHECK(sim.advance_clock(7).empty());
    CHECK(sim.read(0, 1, hw::vct6::COUNT0) == 7);
  }
  SUBCASE("periodic interrupts match the tick-by-tick model") {
    sim.write(0, 1, hw::vct6::PERIOD, 10);
    sim.write(0, 1, hw::vct6::CTRL, 0x7);
    auto events = sim.advance_clock(35);
    auto expected = brute_force_timer(0, 35, 10);
    REQUIRE(expected == std::vector<hw::Tick>{10, 20, 30});
    REQUIRE(events.size() == expected.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
      CHECK(events[i].timestamp == expected[i]);
      CHECK(events[i].seq == i + 1);
      CHECK(events[i].line == 0);
    }
  }
  SUBCASE("zero is the identity") {
    auto before = sim.board(0, 1).values();
    CHECK(sim.advance_clock(0).empty());
    CHECK(sim.board(0, 1).values() == before);
    CHECK(sim.now() == 0);
  }
}

TEST_CASE("motor integrator agrees with the per-tick model") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int32_t> pos_d(-1000, 1000), vel_d(-40, 40);
  std::uniform_int_distribution<hw::Tick> dt_d(0, 120);
  for (int trial = 0; trial < 300; ++trial) {
    hw::HardwareSim sim(test::desk1());
    AxisModel m{pos_d(rng), vel_d(rng), pos_d(rng), true};
    sim.write(1, 3, hw::mot4::POS0, u32(m.pos));
    sim.write(1, 3, hw::mot4::VEL0, u32(m.vel));
    sim.write(1, 3, hw::mot4::TARGET0, u32(m.target));
    sim.write(1, 3, hw::mot4::CMD, 1);
    for (int leg = 0; leg < 3; ++leg) {
      auto dt = dt_d(rng);
      sim.advance_clock(dt);
      for (hw::Tick t = 0; t < dt; ++t) m.step();
      REQUIRE(sim.read(1, 3, hw::mot4::POS0) == u32(m.pos));
      REQUIRE(((sim.read(1, 3, hw::mot4::CMD) & 1) != 0) == m.moving);
    }
  }
}

TEST_CASE("waveform source samples its configured table") {
  hw::HardwareSim sim(test::desk1());
  sim.write(0, 2, hw::adc8::WPARAM0 + 4, 3);
  sim.write(0, 2, hw::adc8::WMODE, hw::adc8::MODE_RAMP << 2);
  sim.write(0, 2, hw::adc8::WPARAM0, 1234);
  sim.advance_clock(10);
  CHECK(sim.read(0, 2, hw::adc8::CH0) == 1234);
  CHECK(sim.read(0, 2, hw::adc8::CH0 + 4) == 30);
  sim.write(0, 2, hw::adc8::WMODE, hw::adc8::MODE_SINE);
  sim.write(0, 2, hw::adc8::WPARAM0, 0xFFFF);
  sim.advance_clock(6);  // t = 16, a quarter of the 64-sample period
  CHECK(sim.read(0, 2, hw::adc8::CH0) > 0xF000);
}

TEST_CASE("inject_interrupt") {
  hw::HardwareSim sim(test::desk1());
  CHECK(sim.inject_interrupt(0, 1, 0).seq == 1);
  CHECK(sim.inject_interrupt(0, 1, 0).seq == 2);
  CHECK(sim.inject_interrupt(0, 2, 0).seq == 1);
  CHECK(error_of([&] { sim.inject_interrupt(0, 4, 0); }) == Errc::empty_slot);
  CHECK(error_of([&] { sim.inject_interrupt(0, 1, 1); }) == Errc::invalid_line);
}

TEST_CASE("hotswap") {
  hw::HardwareSim sim(test::desk1());
  CHECK(sim.remove_board(0, 2) == 1);
  CHECK_FALSE(sim.occupied(0, 2));
  CHECK(sim.insert_board(1, 4, hw::SimBoard("adc8", "new")) == 2);
  CHECK(sim.board(1, 4).type() == "adc8");
  CHECK(error_of([&] { sim.remove_board(1, 9); }) == Errc::empty_slot);
  CHECK(error_of([&] { sim.insert_board(1, 4, hw::SimBoard("vct6", "x")); }) == Errc::occupied_slot);
  CHECK(sim.generation() == 2);
}

namespace {

struct Snapshot {
  std::vector<std::vector<std::uint32_t>> stores;
  std::vector<hw::InterruptEvent> events;
  bool operator==(const Snapshot&) const = default;
};

Snapshot snapshot(const hw::HardwareSim& sim, std::vector<hw::InterruptEvent> events) {
  Snapshot s;
  for (const auto& c : sim.topology().crates) {
    for (const auto& [slot, b] : c.slots) s.stores.push_back(b.values());
  }
  s.events = std::move(events);
  return s;
}

// Writes a random but valid configuration to every board.
void scramble(hw::HardwareSim& sim, std::mt19937_64& rng) {
  auto r = [&](std::uint32_t n) { return static_cast<std::uint32_t>(rng() % n); };
  sim.write(0, 1, hw::vct6::PERIOD, 1 + r(13));
  sim.write(0, 1, hw::vct6::CTRL, r(8));
  sim.write(0, 1, hw::vct6::COUNT0, static_cast<std::uint32_t>(rng()));
  sim.write(0, 2, hw::adc8::WMODE, static_cast<std::uint32_t>(rng()));
  for (std::uint32_t k = 0; k < 8; ++k) sim.write(0, 2, hw::adc8::WPARAM0 + 4 * k, r(0x10000));
  for (std::uint32_t n = 0; n < 4; ++n) {
    sim.write(1, 3, hw::mot4::POS0 + 4 * n, static_cast<std::uint32_t>(rng()));
    sim.write(1, 3, hw::mot4::VEL0 + 4 * n, u32(static_cast<std::int32_t>(r(200)) - 100));
    sim.write(1, 3, hw::mot4::TARGET0 + 4 * n, static_cast<std::uint32_t>(rng()));
  }
  sim.write(1, 3, hw::mot4::CMD, r(16));
}

}  // namespace

TEST_CASE("property: clock additivity") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    hw::HardwareSim split(test::desk1()), whole(test::desk1());
    auto seed = rng();
    std::mt19937_64 r1(seed), r2(seed);
    scramble(split, r1);
    scramble(whole, r2);
    hw::Tick a = rng() % 50, b = rng() % 50;
    auto e1 = split.advance_clock(a);
    auto e2 = split.advance_clock(b);
    e1.insert(e1.end(), e2.begin(), e2.end());
    REQUIRE(snapshot(split, e1) == snapshot(whole, whole.advance_clock(a + b)));
  }
}

TEST_CASE("property: determinism, width safety and interrupt monotonicity") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto run = [seed] {
      std::mt19937_64 rng(seed);
      hw::HardwareSim sim(test::desk1());
      std::vector<hw::InterruptEvent> events;
      for (int step = 0; step < 60; ++step) {
        switch (rng() % 5) {
          case 0: scramble(sim, rng); break;
          case 1: {
            auto ev = sim.advance_clock(rng() % 30);
            events.insert(events.end(), ev.begin(), ev.end());
            break;
          }
          case 2: events.push_back(sim.inject_interrupt(1, 5, 0)); break;
          case 3:
            if (sim.occupied(1, 4)) {
              sim.remove_board(1, 4);
            } else {
              sim.insert_board(1, 4, hw::SimBoard("vct6", "x"));
            }
            break;
          default: sim.write(1, 5, hw::dio16::IN, rng() % 0x10000); break;
        }
      }
      return snapshot(sim, events);
    };
    auto first = run();
    REQUIRE(first == run());

    std::map<std::tuple<int, int, unsigned>, std::uint64_t> last;
    for (const auto& ev : first.events) {
      auto& seen = last[{ev.chassis, ev.slot, ev.line}];
      REQUIRE(ev.seq == seen + 1);
      seen = ev.seq;
    }
  }
  // width safety: every register of every board type stays within its width
  std::mt19937_64 rng(3);
  hw::HardwareSim sim(test::desk1());
  for (int i = 0; i < 200; ++i) {
    scramble(sim, rng);
    sim.advance_clock(rng() % 1000);
    for (const auto& c : sim.topology().crates) {
      for (const auto& [slot, b] : c.slots) {
        const auto regs = b.model().registers.entries();
        for (std::size_t k = 0; k < regs.size(); ++k) {
          REQUIRE(b.value_at(k) < hw::width_limit(regs[k].width));
        }
      }
    }
  }
}
