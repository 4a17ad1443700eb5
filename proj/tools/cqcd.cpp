#include "cqcd/cli.hpp"
#include "cqcd/parallel.hpp"

int main(int argc, char** argv) {
  cqcd::parallel::tune_allocator();
  return cqcd::cli::run(argc, argv);
}
