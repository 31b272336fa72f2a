// Board catalogue and behaviour models.

#include <array>
#include <cmath>
#include <numbers>

#include "deskctl/error.hpp"
#include "deskctl/hw/sim.hpp"

namespace deskctl::hw {

namespace {

RegisterDef rw(std::string name, std::uint32_t offset, unsigned width, std::uint32_t reset = 0) {
  return {std::move(name), offset, width, Access::read_write, reset};
}

RegisterDef ro(std::string name, std::uint32_t offset, unsigned width) {
  return {std::move(name), offset, width, Access::read_only, 0};
}

std::vector<BoardModel> make_catalogue() {
  std::vector<BoardModel> models;

  models.push_back({"vct6",
                    RegisterMap({rw("COUNT0", vct6::COUNT0, 32), rw("COUNT1", vct6::COUNT1, 32),
                                 rw("PERIOD", vct6::PERIOD, 32),
                                 rw("CTRL", vct6::CTRL, 32, vct6::CTRL_COUNT0 | vct6::CTRL_COUNT1),
                                 rw("IRQACK", vct6::IRQACK, 32)}),
                    1, Behavior::counter});

  std::vector<RegisterDef> adc;
  for (std::uint32_t k = 0; k < 8; ++k) adc.push_back(ro("CH" + std::to_string(k), adc8::CH0 + 4 * k, 16));
  adc.push_back(rw("WMODE", adc8::WMODE, 32));
  for (std::uint32_t k = 0; k < 8; ++k) {
    adc.push_back(rw("WPARAM" + std::to_string(k), adc8::WPARAM0 + 4 * k, 16));
  }
  models.push_back({"adc8", RegisterMap(std::move(adc)), 1, Behavior::waveform_source});

  std::vector<RegisterDef> mot;
  for (std::uint32_t n = 0; n < 4; ++n) mot.push_back(rw("POS" + std::to_string(n), mot4::POS0 + 4 * n, 32));
  for (std::uint32_t n = 0; n < 4; ++n) mot.push_back(rw("VEL" + std::to_string(n), mot4::VEL0 + 4 * n, 32));
  for (std::uint32_t n = 0; n < 4; ++n) {
    mot.push_back(rw("TARGET" + std::to_string(n), mot4::TARGET0 + 4 * n, 32));
  }
  mot.push_back(rw("CMD", mot4::CMD, 16));
  models.push_back({"mot4", RegisterMap(std::move(mot)), 1, Behavior::motor_integrator});

  models.push_back({"dio16", RegisterMap({rw("IN", dio16::IN, 16), rw("OUT", dio16::OUT, 16)}), 1,
                    Behavior::static_regs});
  return models;
}

const std::vector<BoardModel>& catalogue() {
  static const std::vector<BoardModel> models = make_catalogue();
  return models;
}

const std::array<std::int32_t, adc8::SINE_TABLE_LEN>& sine_q15() {
  static const auto table = [] {
    std::array<std::int32_t, adc8::SINE_TABLE_LEN> t{};
    for (unsigned i = 0; i < t.size(); ++i) {
      t[i] = static_cast<std::int32_t>(
          std::lround(32767.0 * std::sin(2.0 * std::numbers::pi * i / adc8::SINE_TABLE_LEN)));
    }
    return t;
  }();
  return table;
}

std::uint32_t mask(unsigned width) { return static_cast<std::uint32_t>(width_limit(width) - 1); }

}  // namespace

const BoardModel& board_model(std::string_view type) {
  for (const auto& m : catalogue()) {
    if (m.type == type) return m;
  }
  throw Error(Errc::unknown_board_type, std::string(type));
}

bool is_known_board_type(std::string_view type) noexcept {
  for (const auto& m : catalogue()) {
    if (m.type == type) return true;
  }
  return false;
}

std::vector<std::string> known_board_types() {
  std::vector<std::string> out;
  for (const auto& m : catalogue()) out.push_back(m.type);
  return out;
}

std::uint16_t adc8::sample(std::uint32_t mode, std::uint32_t param, Tick now) noexcept {
  switch (mode) {
    case MODE_RAMP:
      return static_cast<std::uint16_t>((static_cast<std::uint64_t>(param) * now) & 0xFFFF);
    case MODE_SINE: {
      std::int64_t s = sine_q15()[now % SINE_TABLE_LEN];
      std::int64_t v = 0x8000 + ((static_cast<std::int64_t>(param) * s) >> 16);
      return static_cast<std::uint16_t>(v & 0xFFFF);
    }
    default:
      return static_cast<std::uint16_t>(param & 0xFFFF);
  }
}

SimBoard::SimBoard(std::string type, std::string serial)
    : model_(&board_model(type)), serial_(std::move(serial)) {
  for (const auto& e : model_->registers.entries()) values_.push_back(e.reset_value);
  refresh(0);
}

std::uint32_t SimBoard::read(std::uint32_t offset) const {
  int i = model_->registers.index_of(offset);
  if (i < 0) throw Error(Errc::unmapped_offset, type() + " offset " + std::to_string(offset));
  return values_[static_cast<std::size_t>(i)];
}

std::uint32_t SimBoard::write(std::uint32_t offset, std::uint64_t value) {
  int i = model_->registers.index_of(offset);
  if (i < 0) throw Error(Errc::unmapped_offset, type() + " offset " + std::to_string(offset));
  const auto& def = model_->registers.at(static_cast<std::size_t>(i));
  if (def.access == Access::read_only) throw Error(Errc::read_only, type() + " " + def.name);
  if (value >= width_limit(def.width)) throw Error(Errc::value_too_wide, type() + " " + def.name);
  store(static_cast<std::size_t>(i), value);
  if (model_->behavior == Behavior::waveform_source) refresh(refreshed_at_);
  return values_[static_cast<std::size_t>(i)];
}

std::uint32_t SimBoard::value(std::string_view name) const {
  int i = model_->registers.index_of(name);
  if (i < 0) throw Error(Errc::unmapped_offset, std::string(name));
  return values_[static_cast<std::size_t>(i)];
}

std::uint32_t& SimBoard::slot_of(std::uint32_t offset) {
  return values_[static_cast<std::size_t>(model_->registers.index_of(offset))];
}

void SimBoard::store(std::size_t index, std::uint64_t value) {
  values_[index] = static_cast<std::uint32_t>(value) & mask(model_->registers.at(index).width);
}

void SimBoard::refresh(Tick now) {
  refreshed_at_ = now;
  if (model_->behavior != Behavior::waveform_source) return;
  const std::uint32_t modes = slot_of(adc8::WMODE);
  for (std::uint32_t k = 0; k < 8; ++k) {
    std::uint32_t mode = (modes >> (2 * k)) & 0x3;
    std::uint32_t param = slot_of(adc8::WPARAM0 + 4 * k);
    slot_of(adc8::CH0 + 4 * k) = adc8::sample(mode, param, now);
  }
}

void SimBoard::advance(Tick from, Tick dt, std::vector<Tick>* line0_fires) {
  switch (model_->behavior) {
    case Behavior::counter: {
      const std::uint32_t ctrl = slot_of(vct6::CTRL);
      if (ctrl & vct6::CTRL_COUNT0) slot_of(vct6::COUNT0) += static_cast<std::uint32_t>(dt);
      if (ctrl & vct6::CTRL_COUNT1) slot_of(vct6::COUNT1) += static_cast<std::uint32_t>(dt);
      const Tick period = slot_of(vct6::PERIOD);
      if ((ctrl & vct6::CTRL_TIMER_IRQ) && period > 0 && line0_fires) {
        for (Tick t = (from / period + 1) * period; t <= from + dt; t += period) {
          line0_fires->push_back(t);
        }
      }
      break;
    }
    case Behavior::motor_integrator: {
      std::uint32_t& cmd = slot_of(mot4::CMD);
      for (std::uint32_t n = 0; n < 4; ++n) {
        if (!(cmd & (1u << n))) continue;
        auto& pos_reg = slot_of(mot4::POS0 + 4 * n);
        const auto pos = static_cast<std::int64_t>(static_cast<std::int32_t>(pos_reg));
        const auto vel = static_cast<std::int64_t>(static_cast<std::int32_t>(slot_of(mot4::VEL0 + 4 * n)));
        const auto target = static_cast<std::int64_t>(static_cast<std::int32_t>(slot_of(mot4::TARGET0 + 4 * n)));
        if (vel == 0) continue;
        const std::int64_t distance = target - pos;
        const bool toward = (distance > 0 && vel > 0) || (distance < 0 && vel < 0) || distance == 0;
        if (toward) {
          const std::int64_t speed = vel < 0 ? -vel : vel;
          const std::int64_t span = distance < 0 ? -distance : distance;
          const auto needed = static_cast<Tick>((span + speed - 1) / speed);
          if (dt >= needed) {
            pos_reg = static_cast<std::uint32_t>(target);
            cmd &= ~(1u << n);
            continue;
          }
        }
        pos_reg = static_cast<std::uint32_t>(pos + vel * static_cast<std::int64_t>(dt));
      }
      break;
    }
    case Behavior::waveform_source:
    case Behavior::static_regs:
      break;
  }
  refresh(from + dt);
}

}  // namespace deskctl::hw
