#include <string>
#include <vector>

#include "htc/bench.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return htc::bench::cli(args);
}
