#include <iostream>
#include <string>
#include <vector>

#include "arhq/cli.hpp"

int main(int argc, char** argv) {
  return arhq::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
