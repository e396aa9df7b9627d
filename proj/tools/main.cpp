#include <iostream>

#include "annealed/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return annealed::run_cli(args, std::cout, std::cerr);
}
