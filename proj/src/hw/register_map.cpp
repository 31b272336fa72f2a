#include "deskctl/hw/register_map.hpp"

#include <set>

#include "deskctl/error.hpp"

namespace deskctl::hw {

RegisterMap::RegisterMap(std::vector<RegisterDef> entries) : entries_(std::move(entries)) {
  std::set<std::uint32_t> offsets;
  std::set<std::string> names;
  for (const auto& e : entries_) {
    if (e.width != 8 && e.width != 16 && e.width != 32) {
      throw Error(Errc::invalid_argument, "register " + e.name + ": width must be 8, 16 or 32");
    }
    if (e.offset % (e.width / 8) != 0) {
      throw Error(Errc::invalid_argument, "register " + e.name + ": misaligned offset");
    }
    if (e.reset_value >= width_limit(e.width)) {
      throw Error(Errc::invalid_argument, "register " + e.name + ": reset value exceeds width");
    }
    if (!offsets.insert(e.offset).second || !names.insert(e.name).second) {
      throw Error(Errc::invalid_argument, "register " + e.name + ": duplicate offset or name");
    }
  }
}

int RegisterMap::index_of(std::uint32_t offset) const noexcept {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].offset == offset) return static_cast<int>(i);
  }
  return -1;
}

int RegisterMap::index_of(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const RegisterDef& RegisterMap::by_name(std::string_view name) const {
  int i = index_of(name);
  if (i < 0) throw Error(Errc::unmapped_offset, std::string(name));
  return entries_[static_cast<std::size_t>(i)];
}

}  // namespace deskctl::hw
