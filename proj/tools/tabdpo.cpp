#include <atomic>
#include <csignal>

#include "tabdpo/cli.hpp"

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_interrupt(int) { g_cancel.store(true); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
  return tabdpo::cli::run(argc, argv, &g_cancel);
}
