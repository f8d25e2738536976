// SPDX-License-Identifier: Apache-2.0

#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "citegauge/cli.hpp"

namespace {

extern "C" void on_interrupt(int) { citegauge::cli::request_stop(); }

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_interrupt);
    std::signal(SIGTERM, on_interrupt);
    std::vector<std::string> args(argv + 1, argv + argc);
    return citegauge::cli::run(args, std::cout, std::cerr);
}
