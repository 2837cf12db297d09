#include <iostream>

#include "slowfast/cli.hpp"

int main(int argc, char** argv) {
  return slowfast::cli::dispatch(argc, argv, std::cout, std::cerr);
}
