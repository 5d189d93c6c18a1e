#include <iostream>

#include "ntnopt/cli.hpp"

int main(int argc, char** argv) {
  return ntnopt::run_cli(argc, argv, std::cout, std::cerr);
}
