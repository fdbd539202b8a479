#include "sonogrid/app/commands.hpp"

#include <atomic>
#include <csignal>
#include <ctime>
#include <iostream>
#include <pthread.h>
#include <stop_token>
#include <thread>

int main(int argc, char** argv) {
  // Block the interrupt signals before any thread exists so every thread
  // inherits the mask and only the watcher below ever sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::stop_source stop;
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    const timespec tick{0, 100'000'000};
    while (!done.load()) {
      if (sigtimedwait(&signals, nullptr, &tick) > 0) {
        stop.request_stop();
        return;
      }
    }
  });

  const int code = sonogrid::app::run_cli(argc, argv, stop.get_token(), std::cout, std::cerr);
  done = true;
  watcher.join();
  return code;
}
