#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "deskctl/error.hpp"
#include "deskctl/hw/sim.hpp"
#include "deskctl/station/station.hpp"

namespace deskctl::test {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::string desk1_json() { return read_file(std::string(DESKCTL_FIXTURES) + "/desk1.json"); }

inline hw::Topology desk1() { return hw::parse_topology(desk1_json()); }

/// desk1 with builtin drivers registered, reconciled and attached.
/// Logical ids: 1 vct6 (0/1), 2 adc8 (0/2), 3 mot4 (1/3), 4 dio16 (1/5).
inline void bring_up(station::Station& st) {
  st.register_builtin_drivers();
  st.reconcile();
  st.attach_builtin();
}

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::logic_error("expected an Error");
}

}  // namespace deskctl::test
