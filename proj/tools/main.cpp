#include <vector>

#include "abr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return abr::cli::run(args);
}
