#include <iostream>
#include <string>
#include <vector>

#include "dwell/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dwell::run_cli(args, std::cout, std::cerr);
}
