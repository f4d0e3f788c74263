#include <csignal>
#include <iostream>

#include "comcts/cli.hpp"

namespace {

void on_sigint(int) { comcts::cli::request_interrupt(); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_sigint);
  return comcts::cli::run(argc, argv, std::cout, std::cerr);
}
