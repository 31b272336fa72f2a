#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deskctl::hw {

enum class Access { read_only, read_write };

struct RegisterDef {
  std::string name;
  std::uint32_t offset = 0;
  unsigned width = 32;  // 8, 16 or 32 bits
  Access access = Access::read_write;
  std::uint32_t reset_value = 0;
};

constexpr std::uint64_t width_limit(unsigned width) noexcept {
  return std::uint64_t{1} << width;
}

/// Register layout of one board model. Construction validates widths,
/// alignment, unique offsets/names and that reset values fit.
class RegisterMap {
 public:
  RegisterMap() = default;
  explicit RegisterMap(std::vector<RegisterDef> entries);

  std::span<const RegisterDef> entries() const noexcept { return entries_; }

  /// Index of the entry at `offset`, or -1.
  int index_of(std::uint32_t offset) const noexcept;
  int index_of(std::string_view name) const noexcept;

  const RegisterDef& at(std::size_t index) const { return entries_.at(index); }
  const RegisterDef& by_name(std::string_view name) const;

 private:
  std::vector<RegisterDef> entries_;
};

}  // namespace deskctl::hw
