#include <iostream>
#include <string>
#include <vector>

#include "rerank/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return rerank::cli::run(args, std::cout, std::cerr);
}
