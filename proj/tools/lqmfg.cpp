#include "lqmfg/commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return lqmfg::run_command({argv + 1, argv + argc}, std::cout, std::cerr);
}
