#include <iostream>

#include "memadapter/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return memadapter::run_cli(args, std::cout, std::cerr);
}
