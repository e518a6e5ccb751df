#include "so3denoise/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return so3denoise::run_cli(argc, argv, std::cout, std::cerr);
}
