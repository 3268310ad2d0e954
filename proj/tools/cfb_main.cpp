#include <string>
#include <vector>

#include "cfb/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cfb::cli::run(args);
}
