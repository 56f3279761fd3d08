#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return mrk::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cerr);
}
