#include <iostream>

#include "attelig_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return attelig::cli::run(args, std::cout, std::cerr);
}
