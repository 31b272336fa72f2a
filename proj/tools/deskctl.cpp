#include <csignal>
#include <iostream>

#include "deskctl/cli/app.hpp"

namespace {

extern "C" void on_signal(int) { deskctl::cli::request_stop(); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  return deskctl::cli::run(argc, argv, std::cout, std::cerr);
}
